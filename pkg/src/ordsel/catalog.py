"""Relation catalog: schemas, physical layout, indices and statistics.

The catalog is a strict JSON document.  Unknown fields are rejected and every
attribute reference is validated against the declared column list; clustering
and index attributes must be written qualified ("relation.column").
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .costs import CostParams
from .orders import Attribute, SortOrder


class ValidationError(ValueError):
    """Invalid catalog or query content; carries the offending JSON path."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.message = message
        self.path = path


def _require_keys(obj: dict, allowed: set[str], required: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"unknown field(s) {sorted(unknown)}", path)
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"missing required field(s) {sorted(missing)}", path)


def _qualified(raw: str, relation: str, path: str) -> Attribute:
    attr = Attribute.parse(raw)
    if attr.qualifier is None:
        raise ValidationError(f"attribute {raw!r} must be qualified as {relation}.{raw}", path)
    if attr.qualifier != relation:
        raise ValidationError(f"attribute {raw!r} does not belong to relation {relation!r}", path)
    return attr


@dataclass(frozen=True)
class IndexEntry:
    """A secondary index: ordered key plus included (covering-only) columns."""

    key: SortOrder
    include: frozenset[Attribute] = frozenset()
    leaf_blocks: int | None = None

    def covers(self, needed: frozenset[Attribute]) -> bool:
        return needed <= (self.key.attr_set | self.include)


@dataclass(frozen=True)
class RelationEntry:
    name: str
    tuples: int
    blocks: int
    avg_tuple_bytes: int
    columns: tuple[str, ...]
    clustering: SortOrder = SortOrder()
    indices: tuple[IndexEntry, ...] = ()
    distinct: dict = field(default_factory=dict)  # frozenset[str] -> count

    @property
    def schema(self) -> frozenset[Attribute]:
        return frozenset(Attribute(self.name, c) for c in self.columns)

    def attribute(self, column: str) -> Attribute:
        return Attribute(self.name, column)

    def distinct_count(self, columns: frozenset[str]) -> int | None:
        """Exact catalog entry for a column set, if present."""
        value = self.distinct.get(columns)
        return None if value is None else min(value, max(self.tuples, 1))

    def index_scan_blocks(self, index: IndexEntry, block_size: int) -> float:
        """Leaf blocks read by a covering index scan.

        Explicit leaf_blocks wins; otherwise entries are assumed to be
        proportionally narrower than full tuples (bytes per column times the
        number of key+included columns).
        """
        if index.leaf_blocks is not None:
            return float(index.leaf_blocks)
        per_column = self.avg_tuple_bytes / max(len(self.columns), 1)
        entry_bytes = per_column * (len(index.key) + len(index.include))
        return math.ceil(self.tuples * entry_bytes / block_size)


@dataclass(frozen=True)
class Catalog:
    block_size: int
    memory_blocks: int
    cpu_comparison_cost: float
    merge_pass_constant: float
    relations: dict  # name -> RelationEntry

    def cost_params(
        self,
        memory_blocks: int | None = None,
        block_size: int | None = None,
        cpu_unit: float | None = None,
    ) -> CostParams:
        return CostParams(
            memory_blocks=memory_blocks or self.memory_blocks,
            block_size=block_size or self.block_size,
            cpu_comparison_cost=self.cpu_comparison_cost if cpu_unit is None else cpu_unit,
            merge_pass_constant=self.merge_pass_constant,
        )

    def relation(self, name: str, path: str = "$") -> RelationEntry:
        entry = self.relations.get(name)
        if entry is None:
            raise ValidationError(f"unknown relation {name!r}", path)
        return entry

    def to_json(self) -> dict:
        relations = []
        for rel in self.relations.values():
            item: dict = {
                "name": rel.name,
                "tuples": rel.tuples,
                "blocks": rel.blocks,
                "avg_tuple_bytes": rel.avg_tuple_bytes,
                "columns": list(rel.columns),
                "clustering": rel.clustering.to_strings(),
                "indices": [
                    {
                        "key": ix.key.to_strings(),
                        "include": sorted(str(a) for a in ix.include),
                        **({"leaf_blocks": ix.leaf_blocks} if ix.leaf_blocks is not None else {}),
                    }
                    for ix in rel.indices
                ],
                "distinct": {
                    ",".join(sorted(cols)): count
                    for cols, count in sorted(rel.distinct.items(), key=lambda kv: sorted(kv[0]))
                },
            }
            relations.append(item)
        return {
            "block_size": self.block_size,
            "memory_blocks": self.memory_blocks,
            "cpu_unit": self.cpu_comparison_cost,
            "merge_pass_constant": self.merge_pass_constant,
            "relations": relations,
        }


def _parse_relation(obj: dict, path: str) -> RelationEntry:
    _require_keys(
        obj,
        allowed={"name", "tuples", "blocks", "avg_tuple_bytes", "columns",
                 "clustering", "indices", "distinct"},
        required={"name", "tuples", "avg_tuple_bytes", "columns"},
        path=path,
    )
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise ValidationError("relation name must be a non-empty string", path)
    tuples = obj["tuples"]
    if not isinstance(tuples, int) or tuples < 0:
        raise ValidationError("tuples must be a non-negative integer", f"{path}.tuples")
    avg_bytes = obj["avg_tuple_bytes"]
    if not isinstance(avg_bytes, int) or avg_bytes <= 0:
        raise ValidationError("avg_tuple_bytes must be a positive integer", f"{path}.avg_tuple_bytes")
    columns = obj["columns"]
    if (
        not isinstance(columns, list)
        or not columns
        or len(set(columns)) != len(columns)
        or not all(isinstance(c, str) and c for c in columns)
    ):
        raise ValidationError("columns must be a non-empty list of unique names", f"{path}.columns")
    column_set = set(columns)

    blocks = obj.get("blocks")
    if blocks is None:
        blocks = max(1, math.ceil(tuples * avg_bytes / 4096)) if tuples else 1
    if not isinstance(blocks, int) or blocks < 0:
        raise ValidationError("blocks must be a non-negative integer", f"{path}.blocks")
    if tuples > 0 and blocks < 1:
        raise ValidationError("blocks must be >= 1 when tuples > 0", f"{path}.blocks")

    clustering_raw = obj.get("clustering", [])
    clustering_attrs = []
    for i, raw in enumerate(clustering_raw):
        attr = _qualified(raw, name, f"{path}.clustering[{i}]")
        if attr.column not in column_set:
            raise ValidationError(f"clustering column {attr.column!r} not in schema", f"{path}.clustering[{i}]")
        clustering_attrs.append(attr)
    clustering = SortOrder(tuple(clustering_attrs))

    indices = []
    for i, ix in enumerate(obj.get("indices", [])):
        ix_path = f"{path}.indices[{i}]"
        _require_keys(ix, allowed={"key", "include", "leaf_blocks"}, required={"key"}, path=ix_path)
        if not ix["key"]:
            raise ValidationError("index key must be non-empty", f"{ix_path}.key")
        key_attrs = []
        for j, raw in enumerate(ix["key"]):
            attr = _qualified(raw, name, f"{ix_path}.key[{j}]")
            if attr.column not in column_set:
                raise ValidationError(f"index key column {attr.column!r} not in schema", f"{ix_path}.key[{j}]")
            key_attrs.append(attr)
        include = set()
        for j, raw in enumerate(ix.get("include", [])):
            attr = _qualified(raw, name, f"{ix_path}.include[{j}]")
            if attr.column not in column_set:
                raise ValidationError(f"included column {attr.column!r} not in schema", f"{ix_path}.include[{j}]")
            include.add(attr)
        leaf_blocks = ix.get("leaf_blocks")
        if leaf_blocks is not None and (not isinstance(leaf_blocks, int) or leaf_blocks < 1):
            raise ValidationError("leaf_blocks must be a positive integer", f"{ix_path}.leaf_blocks")
        indices.append(IndexEntry(SortOrder(tuple(key_attrs)), frozenset(include), leaf_blocks))

    distinct = {}
    for raw_key, count in obj.get("distinct", {}).items():
        d_path = f"{path}.distinct[{raw_key!r}]"
        cols = frozenset(c.strip() for c in raw_key.split(","))
        if not cols <= column_set:
            raise ValidationError(f"distinct key references unknown column(s) {sorted(cols - column_set)}", d_path)
        if not isinstance(count, int) or count < 1:
            raise ValidationError("distinct count must be a positive integer", d_path)
        distinct[cols] = count

    return RelationEntry(
        name=name,
        tuples=tuples,
        blocks=blocks,
        avg_tuple_bytes=avg_bytes,
        columns=tuple(columns),
        clustering=clustering,
        indices=tuple(indices),
        distinct=distinct,
    )


def parse_catalog(doc: dict) -> Catalog:
    _require_keys(
        doc,
        allowed={"block_size", "memory_blocks", "cpu_unit", "merge_pass_constant", "relations"},
        required={"block_size", "memory_blocks", "relations"},
        path="$",
    )
    block_size = doc["block_size"]
    memory_blocks = doc["memory_blocks"]
    if not isinstance(block_size, int) or block_size <= 0:
        raise ValidationError("block_size must be a positive integer", "$.block_size")
    if not isinstance(memory_blocks, int) or memory_blocks < 3:
        raise ValidationError("memory_blocks must be an integer >= 3", "$.memory_blocks")
    cpu_unit = doc.get("cpu_unit", 1e-6)
    if not isinstance(cpu_unit, (int, float)) or cpu_unit < 0:
        raise ValidationError("cpu_unit must be a non-negative number", "$.cpu_unit")
    merge_const = doc.get("merge_pass_constant", 1.0)
    if not isinstance(merge_const, (int, float)) or merge_const < 0:
        raise ValidationError("merge_pass_constant must be a non-negative number", "$.merge_pass_constant")

    relations: dict[str, RelationEntry] = {}
    for i, rel_obj in enumerate(doc["relations"]):
        rel = _parse_relation(rel_obj, f"$.relations[{i}]")
        if rel.name in relations:
            raise ValidationError(f"duplicate relation {rel.name!r}", f"$.relations[{i}]")
        relations[rel.name] = rel

    return Catalog(
        block_size=block_size,
        memory_blocks=memory_blocks,
        cpu_comparison_cost=float(cpu_unit),
        merge_pass_constant=float(merge_const),
        relations=relations,
    )


def load_catalog(path: str | Path) -> Catalog:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", str(path)) from exc
    if not isinstance(doc, dict):
        raise ValidationError("catalog document must be a JSON object", str(path))
    return parse_catalog(doc)
