"""Command-line interface: optimize, solve-prefix, sort, bench, gen.

All structured output is JSON (plans, metrics, solver results); record data
is CSV.  Errors are printed to stderr as one-line JSON {code, message, path}
and map to exit code 1 (validation) or 2 (I/O).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

from .catalog import ValidationError, load_catalog
from .datagen import COLUMNS, generate_records, generate_rows, rows_to_csv
from .extsort import (
    InputNotSortedError,
    Record,
    SortEngineError,
    SortSpec,
    compare_sorts,
    sort_mrs,
    sort_srs,
)
from .orders import OrderAlgebraError, SortOrder
from .planner import Planner, RefineOptions, plan_to_dot, plan_to_json, refine
from .prefix import (
    Assignment,
    PrefixInstance,
    PrefixSolverError,
    brute_force,
    identity_benefit,
    solve_path,
    solve_tree_half_approx,
    table_benefit,
)
from .query import load_query

logger = logging.getLogger("ordsel")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        return args.handler(args)
    except (ValidationError, OrderAlgebraError, PrefixSolverError, SortEngineError) as exc:
        _emit_error("validation", str(exc), getattr(exc, "path", None))
        return EXIT_VALIDATION
    except OSError as exc:
        _emit_error("io", str(exc), getattr(exc, "filename", None))
        return EXIT_IO


def _setup_logging() -> None:
    level = os.environ.get("ORDSEL_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING))


def _emit_error(code: str, message: str, path) -> None:
    print(json.dumps({"code": code, "message": message, "path": path}), file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ordsel")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="choose sort orders and build a plan")
    p_opt.add_argument("--catalog", required=True)
    p_opt.add_argument("--query", required=True)
    refine_group = p_opt.add_mutually_exclusive_group()
    refine_group.add_argument("--refine", dest="refine", action="store_true", default=True)
    refine_group.add_argument("--no-refine", dest="refine", action="store_false")
    p_opt.add_argument("--refine-f", choices=["cost", "identity"], default="cost")
    p_opt.add_argument("--refine-groupby", action="store_true")
    p_opt.add_argument("--strategy", choices=["afm", "exhaustive", "ford-min"], default="afm")
    p_opt.add_argument("--explain", nargs="?", const="-", default=None, metavar="PATH")
    p_opt.add_argument("--dot", metavar="PATH")
    p_opt.add_argument("--memory-blocks", type=int)
    p_opt.add_argument("--block-size", type=int)
    p_opt.add_argument("--cpu-unit", type=float)
    p_opt.set_defaults(handler=_cmd_optimize)

    p_solve = sub.add_parser("solve-prefix", help="solve a common-prefix instance")
    p_solve.add_argument("--instance", required=True)
    p_solve.add_argument("--oracle", action="store_true")
    p_solve.set_defaults(handler=_cmd_solve_prefix)

    p_sort = sub.add_parser("sort", help="externally sort a CSV file")
    p_sort.add_argument("--input", required=True)
    p_sort.add_argument("--key", required=True, help='typed columns, e.g. "c1:int,c2:str"')
    p_sort.add_argument("--target-order", required=True, help="comma-separated key columns")
    p_sort.add_argument("--known-prefix", default="", help="prefix of target already sorted")
    p_sort.add_argument("--algorithm", choices=["mrs", "srs"], default="mrs")
    p_sort.add_argument("--memory-records", type=int, default=4096)
    p_sort.add_argument("--memory-blocks", type=int, default=64)
    p_sort.add_argument("--block-size", type=int, default=4096)
    p_sort.add_argument("--output", default="-")
    p_sort.add_argument("--metrics-out")
    p_sort.set_defaults(handler=_cmd_sort)

    p_bench = sub.add_parser("bench", help="compare MRS vs SRS over segment sizes")
    p_bench.add_argument("--segments", default="16", help="comma-separated segment counts")
    p_bench.add_argument("--rows", type=int, default=65536)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--memory-records", type=int, default=4096)
    p_bench.add_argument("--memory-blocks", type=int, default=64)
    p_bench.add_argument("--block-size", type=int, default=4096)
    p_bench.set_defaults(handler=_cmd_bench)

    p_gen = sub.add_parser("gen", help="generate a deterministic CSV dataset")
    p_gen.add_argument("--rows", type=int, required=True)
    p_gen.add_argument("--segments", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", default="-")
    p_gen.set_defaults(handler=_cmd_gen)

    return parser


# -- optimize ---------------------------------------------------------------------


def _cmd_optimize(args) -> int:
    catalog = load_catalog(args.catalog)
    query = load_query(args.query, catalog)
    params = catalog.cost_params(args.memory_blocks, args.block_size, args.cpu_unit)
    planner = Planner(query, catalog, params, strategy=args.strategy)
    plan = planner.optimize()
    if args.refine:
        plan = refine(
            plan,
            planner,
            RefineOptions(benefit=args.refine_f, include_group_by=args.refine_groupby),
        )
    doc = {
        "plan": plan_to_json(plan),
        "total_cost": plan.cost.total,
        "tree": plan.render(),
    }
    print(json.dumps(doc, sort_keys=True))
    if args.explain is not None:
        payload = json.dumps(planner.explain(), sort_keys=True)
        if args.explain == "-":
            print(payload, file=sys.stderr)
        else:
            with open(args.explain, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(plan_to_dot(plan) + "\n")
    return EXIT_OK


# -- solve-prefix -------------------------------------------------------------------


def _cmd_solve_prefix(args) -> int:
    with open(args.instance, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", args.instance) from exc

    unknown = set(doc) - {"vertices", "edges", "f"}
    if unknown:
        raise ValidationError(f"unknown field(s) {sorted(unknown)}", args.instance)
    if "vertices" not in doc:
        raise ValidationError("missing 'vertices'", args.instance)
    sets = tuple(
        frozenset(SortOrder.from_strings(names).attrs) for names in doc["vertices"]
    )
    edges = tuple(tuple(e) for e in doc.get("edges", []))
    f_spec = doc.get("f", "identity")
    if f_spec == "identity":
        fn = identity_benefit
    elif isinstance(f_spec, list):
        fn = table_benefit(f_spec)
    else:
        raise ValidationError(f"unsupported benefit function {f_spec!r}", args.instance)

    inst = PrefixInstance(sets, edges, fn)
    if inst.is_path():
        solved = solve_path(inst)
        method = "path-exact"
    else:
        solved = solve_tree_half_approx(inst)
        method = "tree-half-approx"

    doc_out = {
        "method": method,
        "benefit": solved.benefit,
        "permutations": [p.to_strings() for p in solved.permutations],
    }
    if args.oracle:
        oracle = brute_force(inst)
        doc_out["oracle_benefit"] = oracle.benefit
        doc_out["oracle_permutations"] = [p.to_strings() for p in oracle.permutations]
    print(json.dumps(doc_out, sort_keys=True))
    return EXIT_OK


# -- sort ---------------------------------------------------------------------------


def _parse_key_types(spec: str) -> dict[str, str]:
    types = {}
    for part in spec.split(","):
        if ":" not in part:
            raise ValidationError(f"key column {part!r} needs a type, e.g. {part}:int", "--key")
        name, typ = part.rsplit(":", 1)
        if typ not in ("int", "str"):
            raise ValidationError(f"unsupported key type {typ!r}", "--key")
        types[name.strip()] = typ
    return types


def _read_csv_records(path: str, key_columns: list[str], types: dict[str, str]):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError("input CSV is empty", path)
        positions = []
        for col in key_columns:
            if col not in header:
                raise ValidationError(f"key column {col!r} not in CSV header", path)
            positions.append(header.index(col))
        records = []
        for row in reader:
            keys = []
            for col, pos in zip(key_columns, positions):
                raw = row[pos]
                keys.append(int(raw) if types[col] == "int" else raw)
            records.append((tuple(keys), ",".join(row).encode("utf-8")))
    return header, records


def _cmd_sort(args) -> int:
    types = _parse_key_types(args.key)
    target_cols = [c.strip() for c in args.target_order.split(",") if c.strip()]
    prefix_cols = [c.strip() for c in args.known_prefix.split(",") if c.strip()]
    for col in target_cols:
        if col not in types:
            raise ValidationError(f"target column {col!r} missing from --key", "--target-order")
    spec = SortSpec(
        target=SortOrder.from_strings(target_cols),
        known_prefix=SortOrder.from_strings(prefix_cols),
        memory_records=args.memory_records,
        memory_blocks=args.memory_blocks,
        block_size=args.block_size,
    )
    header, records = _read_csv_records(args.input, target_cols, types)
    sorter = sort_mrs if args.algorithm == "mrs" else sort_srs
    try:
        stream, metrics = sorter(iter(records), spec)
        lines = [",".join(header)]
        lines.extend(record[1].decode("utf-8") for record in stream)
    except InputNotSortedError as exc:
        _emit_error("validation", str(exc), args.input)
        return EXIT_VALIDATION
    payload = "\n".join(lines) + "\n"
    if args.output == "-":
        sys.stdout.write(payload)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
    if args.metrics_out:
        with open(args.metrics_out, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_dict(), fh, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


# -- bench ----------------------------------------------------------------------------


def _cmd_bench(args) -> int:
    try:
        segment_counts = [int(s) for s in args.segments.split(",") if s.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --segments list: {exc}", "--segments") from exc
    if not segment_counts:
        raise ValidationError("--segments must name at least one count", "--segments")

    spec = SortSpec(
        target=SortOrder.of("c1", "c2"),
        known_prefix=SortOrder.of("c1"),
        memory_records=args.memory_records,
        memory_blocks=args.memory_blocks,
        block_size=args.block_size,
    )
    out = io.StringIO()
    writer = None
    for segments in segment_counts:
        records = generate_records(args.rows, segments, args.seed)
        for row in compare_sorts(records, spec):
            row = {"segments": segments, **row}
            if writer is None:
                writer = csv.DictWriter(out, fieldnames=list(row))
                writer.writeheader()
            writer.writerow(row)
    sys.stdout.write(out.getvalue())
    return EXIT_OK


# -- gen ------------------------------------------------------------------------------


def _cmd_gen(args) -> int:
    payload = rows_to_csv(generate_rows(args.rows, args.segments, args.seed))
    if args.out == "-":
        sys.stdout.write(payload)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
