"""Deterministic synthetic datasets for the sort benchmarks."""

from __future__ import annotations

import random
from typing import Iterator

from .extsort import Record

COLUMNS = ("c1", "c2", "c3")


def generate_rows(rows: int, segments: int, seed: int) -> Iterator[tuple[int, int, int]]:
    """Rows (c1, c2, c3): c1 ascending over `segments` distinct values with
    near-uniform segment sizes, c2 and c3 pseudo-random from the seed."""
    if rows < 0 or segments < 1:
        raise ValueError("rows must be >= 0 and segments >= 1")
    rng = random.Random(seed)
    segments = min(segments, rows) if rows else segments
    base, extra = divmod(rows, segments) if rows else (0, 0)
    for segment in range(segments):
        size = base + (1 if segment < extra else 0)
        for _ in range(size):
            yield (segment, rng.randrange(1_000_000_000), rng.randrange(1_000_000_000))


def generate_records(rows: int, segments: int, seed: int) -> list[Record]:
    """Records keyed (c1, c2) with the c3 column as payload."""
    return [
        ((c1, c2), str(c3).encode("ascii"))
        for c1, c2, c3 in generate_rows(rows, segments, seed)
    ]


def rows_to_csv(rows) -> str:
    lines = [",".join(COLUMNS)]
    lines.extend(f"{c1},{c2},{c3}" for c1, c2, c3 in rows)
    return "\n".join(lines) + "\n"
