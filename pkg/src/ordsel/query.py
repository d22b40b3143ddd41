"""Query trees: algebraic expressions, attribute equivalence and statistics.

A query is a fixed join tree in JSON form.  Join predicates are conjunctive
equalities; selections carry only a selectivity (plans are costed, never
executed).  Equality predicates induce attribute equivalence classes whose
representatives give every join its representative attribute set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import Catalog, RelationEntry, ValidationError, _require_keys
from .orders import Attribute, SortOrder


@dataclass
class Expression:
    node_id: int
    schema: frozenset
    children: tuple = ()

    @property
    def kind(self) -> str:
        return type(self).__name__


@dataclass
class BaseRelation(Expression):
    relation: RelationEntry = None  # type: ignore[assignment]


@dataclass
class Select(Expression):
    selectivity: float = 1.0


@dataclass
class Project(Expression):
    attrs: tuple = ()


@dataclass
class Join(Expression):
    # ((left_attr, right_attr), ...) equality pairs
    pairs: tuple = ()


@dataclass
class GroupBy(Expression):
    keys: tuple = ()
    aggregates: tuple = ()


def iter_nodes(expr: Expression):
    yield expr
    for child in expr.children:
        yield from iter_nodes(child)


def join_nodes(expr: Expression) -> list[Join]:
    return [n for n in iter_nodes(expr) if isinstance(n, Join)]


@dataclass(frozen=True)
class QuerySpec:
    tree: Expression
    order_by: SortOrder

    def to_json(self) -> dict:
        doc = _serialize_node(self.tree)
        doc["order_by"] = self.order_by.to_strings()
        return doc


def _serialize_node(expr: Expression) -> dict:
    if isinstance(expr, GroupBy):
        doc = _serialize_node(expr.children[0])
        doc["group_by"] = [str(a) for a in expr.keys]
        if expr.aggregates:
            doc["aggregates"] = list(expr.aggregates)
        return doc
    if isinstance(expr, Project):
        doc = _serialize_node(expr.children[0])
        doc["project"] = [str(a) for a in expr.attrs]
        return doc
    if isinstance(expr, Select):
        doc = _serialize_node(expr.children[0])
        doc["select"] = expr.selectivity
        return doc
    if isinstance(expr, Join):
        return {
            "join": {
                "left": _serialize_node(expr.children[0]),
                "right": _serialize_node(expr.children[1]),
                "on": [[str(a), str(b)] for a, b in expr.pairs],
            }
        }
    assert isinstance(expr, BaseRelation)
    return {"relation": expr.relation.name}


class EquivalenceClasses:
    """Union-find over attributes, driven by equality join predicates.

    The representative of each class is its lexicographically least member,
    so representative choice is deterministic.
    """

    def __init__(self) -> None:
        self._parent: dict = {}
        self._rep: dict = {}

    def _find(self, a: Attribute) -> Attribute:
        root = a
        while self._parent.get(root, root) != root:
            root = self._parent[root]
        while self._parent.get(a, a) != a:
            self._parent[a], a = root, self._parent[a]
        return root

    def union(self, a: Attribute, b: Attribute) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra != rb:
            self._parent[ra] = rb
        self._rep = {}

    def members(self, a: Attribute) -> frozenset:
        root = self._find(a)
        known = set(self._parent) | set(self._parent.values())
        return frozenset(m for m in known if self._find(m) == root) or frozenset([a])

    def representative(self, a: Attribute) -> Attribute:
        if not self._rep:
            classes: dict = {}
            for m in set(self._parent) | set(self._parent.values()):
                classes.setdefault(self._find(m), set()).add(m)
            for group in classes.values():
                rep = min(group, key=lambda x: x.sort_key)
                for m in group:
                    self._rep[m] = rep
        return self._rep.get(a, a)

    def rewrite(self, order: SortOrder) -> SortOrder:
        """Map every attribute of an order to its class representative."""
        seen: list = []
        for a in order.attrs:
            rep = self.representative(a)
            if rep not in seen:
                seen.append(rep)
        return SortOrder(tuple(seen))

    def rewrite_set(self, attrs) -> frozenset:
        return frozenset(self.representative(a) for a in attrs)


def build_equivalence_classes(expr: Expression) -> EquivalenceClasses:
    eq = EquivalenceClasses()
    for node in join_nodes(expr):
        for a, b in node.pairs:
            eq.union(a, b)
    return eq


def representative_join_set(node: Join, eq: EquivalenceClasses) -> frozenset:
    attrs = set()
    for a, b in node.pairs:
        attrs.add(eq.representative(a))
        attrs.add(eq.representative(b))
    return frozenset(attrs)


# --- query loading -----------------------------------------------------------


_NODE_KEYS = {"relation", "join", "select", "project"}
_ROOT_KEYS = _NODE_KEYS | {"group_by", "aggregates", "order_by"}


def _collect_referenced(obj: dict, catalog: Catalog, out: dict, path: str) -> None:
    """First pass: gather every column the query references, per relation."""

    def note(raw: str, p: str) -> None:
        attr = Attribute.parse(raw)
        if attr.qualifier is None:
            raise ValidationError(f"attribute {raw!r} must be qualified", p)
        rel = catalog.relation(attr.qualifier, p)
        if attr.column not in rel.columns:
            raise ValidationError(f"unknown column {raw!r}", p)
        out.setdefault(attr.qualifier, set()).add(attr.column)

    if "join" in obj:
        join = obj["join"]
        _require_keys(join, allowed={"left", "right", "on"}, required={"left", "right", "on"}, path=f"{path}.join")
        _collect_referenced(join["left"], catalog, out, f"{path}.join.left")
        _collect_referenced(join["right"], catalog, out, f"{path}.join.right")
        for i, pair in enumerate(join["on"]):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ValidationError("join predicate must be a two-element list", f"{path}.join.on[{i}]")
            note(pair[0], f"{path}.join.on[{i}]")
            note(pair[1], f"{path}.join.on[{i}]")
    elif "relation" in obj:
        catalog.relation(obj["relation"], f"{path}.relation")
        out.setdefault(obj["relation"], set())
    for i, raw in enumerate(obj.get("project", [])):
        note(raw, f"{path}.project[{i}]")
    for i, raw in enumerate(obj.get("group_by", [])):
        note(raw, f"{path}.group_by[{i}]")
    for i, raw in enumerate(obj.get("order_by", [])):
        note(raw, f"{path}.order_by[{i}]")


class _Builder:
    def __init__(self, catalog: Catalog, referenced: dict):
        self.catalog = catalog
        self.referenced = referenced
        self.next_id = 0
        self.used_relations: set = set()

    def new_id(self) -> int:
        self.next_id += 1
        return self.next_id - 1

    def build(self, obj: dict, path: str, root: bool = False) -> Expression:
        allowed = _ROOT_KEYS if root else _NODE_KEYS
        _require_keys(obj, allowed=allowed, required=set(), path=path)
        if ("relation" in obj) == ("join" in obj):
            raise ValidationError("node must have exactly one of 'relation' or 'join'", path)

        if "relation" in obj:
            name = obj["relation"]
            rel = self.catalog.relation(name, f"{path}.relation")
            if name in self.used_relations:
                raise ValidationError(f"relation {name!r} used more than once", f"{path}.relation")
            self.used_relations.add(name)
            cols = self.referenced.get(name) or set(rel.columns)
            schema = frozenset(Attribute(name, c) for c in sorted(cols))
            expr: Expression = BaseRelation(self.new_id(), schema, (), rel)
        else:
            join = obj["join"]
            left = self.build(join["left"], f"{path}.join.left")
            right = self.build(join["right"], f"{path}.join.right")
            if not join["on"]:
                raise ValidationError("cross products are not supported: join needs predicates", f"{path}.join.on")
            pairs = []
            for i, pair in enumerate(join["on"]):
                a = Attribute.parse(pair[0])
                b = Attribute.parse(pair[1])
                p = f"{path}.join.on[{i}]"
                if a in left.schema and b in right.schema:
                    pairs.append((a, b))
                elif b in left.schema and a in right.schema:
                    pairs.append((b, a))
                else:
                    raise ValidationError(
                        f"predicate {pair[0]}={pair[1]} does not span the two join inputs", p
                    )
            expr = Join(self.new_id(), left.schema | right.schema, (left, right), tuple(pairs))

        if "select" in obj:
            sel = obj["select"]
            if not isinstance(sel, (int, float)) or not (0 < sel <= 1):
                raise ValidationError("select must be a selectivity in (0, 1]", f"{path}.select")
            expr = Select(self.new_id(), expr.schema, (expr,), float(sel))

        if "project" in obj:
            attrs = tuple(Attribute.parse(raw) for raw in obj["project"])
            if not attrs:
                raise ValidationError("project list must be non-empty", f"{path}.project")
            missing = [str(a) for a in attrs if a not in expr.schema]
            if missing:
                raise ValidationError(f"projected column(s) {missing} not in input schema", f"{path}.project")
            expr = Project(self.new_id(), frozenset(attrs), (expr,), attrs)

        if root and "group_by" in obj:
            keys = tuple(Attribute.parse(raw) for raw in obj["group_by"])
            missing = [str(a) for a in keys if a not in expr.schema]
            if missing:
                raise ValidationError(f"group-by column(s) {missing} not in input schema", "$.group_by")
            aggregates = tuple(obj.get("aggregates", []))
            expr = GroupBy(self.new_id(), frozenset(keys), (expr,), keys, aggregates)
        elif root and "aggregates" in obj:
            raise ValidationError("aggregates require group_by", "$.aggregates")

        return expr


def parse_query(doc: dict, catalog: Catalog) -> QuerySpec:
    referenced: dict = {}
    _collect_referenced(doc, catalog, referenced, "$")
    builder = _Builder(catalog, referenced)
    tree = builder.build(doc, "$", root=True)

    order_attrs = tuple(Attribute.parse(raw) for raw in doc.get("order_by", []))
    missing = [str(a) for a in order_attrs if a not in tree.schema]
    if missing:
        raise ValidationError(f"order-by column(s) {missing} not in query output", "$.order_by")
    return QuerySpec(tree, SortOrder(order_attrs))


def load_query(path: str | Path, catalog: Catalog) -> QuerySpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", str(path)) from exc
    if not isinstance(doc, dict):
        raise ValidationError("query document must be a JSON object", str(path))
    return parse_query(doc, catalog)


# --- statistics --------------------------------------------------------------


class StatsModel:
    """Cardinality, width and distinct-count estimates per expression node.

    Base-relation numbers come from the catalog; intermediate results use
    uniformity/independence (join selectivity 1/max of distinct counts per
    equated class, distinct counts capped by cardinality).  Attribute
    arguments are expected in representative space.
    """

    DEFAULT_DISTINCT_FRACTION = 10  # unknown column: N / 10 distinct values

    def __init__(self, catalog: Catalog, eq: EquivalenceClasses):
        self.catalog = catalog
        self.eq = eq
        self._rows: dict[int, float] = {}
        self._bytes: dict[int, float] = {}
        self._rep_schema: dict[int, frozenset] = {}

    def rep_schema(self, expr: Expression) -> frozenset:
        if expr.node_id not in self._rep_schema:
            self._rep_schema[expr.node_id] = self.eq.rewrite_set(expr.schema)
        return self._rep_schema[expr.node_id]

    def rows(self, expr: Expression) -> float:
        if expr.node_id in self._rows:
            return self._rows[expr.node_id]
        if isinstance(expr, BaseRelation):
            value = float(expr.relation.tuples)
        elif isinstance(expr, Select):
            value = self.rows(expr.children[0]) * expr.selectivity
        elif isinstance(expr, (Project,)):
            value = self.rows(expr.children[0])
        elif isinstance(expr, Join):
            left, right = expr.children
            value = self.rows(left) * self.rows(right)
            for rep in sorted({self.eq.representative(a) for a, _ in expr.pairs},
                              key=lambda a: a.sort_key):
                d_left = self.distinct_set(left, frozenset([rep]))
                d_right = self.distinct_set(right, frozenset([rep]))
                value /= max(d_left, d_right, 1.0)
        elif isinstance(expr, GroupBy):
            value = self.distinct_set(expr.children[0], self.eq.rewrite_set(expr.keys))
        else:  # pragma: no cover - exhaustive above
            raise TypeError(expr)
        self._rows[expr.node_id] = value
        return value

    def avg_bytes(self, expr: Expression) -> float:
        if expr.node_id in self._bytes:
            return self._bytes[expr.node_id]
        if isinstance(expr, BaseRelation):
            rel = expr.relation
            fraction = len(expr.schema) / max(len(rel.columns), 1)
            value = max(1.0, rel.avg_tuple_bytes * fraction)
        elif isinstance(expr, Select):
            value = self.avg_bytes(expr.children[0])
        elif isinstance(expr, Project):
            child = expr.children[0]
            fraction = len(expr.schema) / max(len(child.schema), 1)
            value = max(1.0, self.avg_bytes(child) * fraction)
        elif isinstance(expr, Join):
            value = self.avg_bytes(expr.children[0]) + self.avg_bytes(expr.children[1])
        elif isinstance(expr, GroupBy):
            value = self.avg_bytes(expr.children[0])
        else:  # pragma: no cover
            raise TypeError(expr)
        self._bytes[expr.node_id] = value
        return value

    def blocks(self, expr: Expression) -> float:
        rows = self.rows(expr)
        if rows <= 0:
            return 0.0
        return max(1.0, math.ceil(rows * self.avg_bytes(expr) / self.catalog.block_size))

    def distinct_set(self, expr: Expression, rep_attrs: frozenset) -> float:
        """Distinct values of a representative attribute set on expr's result."""
        if not rep_attrs:
            return 1.0
        cap = max(self.rows(expr), 1.0)
        if isinstance(expr, BaseRelation):
            return min(cap, self._base_distinct(expr, rep_attrs))
        if isinstance(expr, (Select, Project, GroupBy)):
            return min(cap, self.distinct_set(expr.children[0], rep_attrs))
        assert isinstance(expr, Join)
        left, right = expr.children
        product = 1.0
        for rep in sorted(rep_attrs, key=lambda a: a.sort_key):
            sides = [
                self.distinct_set(side, frozenset([rep]))
                for side in (left, right)
                if rep in self.rep_schema(side)
            ]
            product *= min(sides) if sides else self.rows(expr) / self.DEFAULT_DISTINCT_FRACTION
        return min(cap, max(product, 1.0))

    def _base_distinct(self, expr: BaseRelation, rep_attrs: frozenset) -> float:
        rel = expr.relation
        columns = set()
        for rep in rep_attrs:
            local = {m.column for m in self.eq.members(rep) if m.qualifier == rel.name}
            local &= set(rel.columns)
            if not local:
                local = {rep.column} if rep.column in rel.columns else set()
            columns |= local
        if not columns:
            return max(rel.tuples / self.DEFAULT_DISTINCT_FRACTION, 1.0)
        exact = rel.distinct_count(frozenset(columns))
        if exact is not None:
            return float(exact)
        product = 1.0
        for col in sorted(columns):
            single = rel.distinct_count(frozenset([col]))
            if single is None:
                single = max(rel.tuples // self.DEFAULT_DISTINCT_FRACTION, 1)
            product *= single
        return max(product, 1.0)
