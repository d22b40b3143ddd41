"""Cost arithmetic for full sorts, partial sorts and merge joins.

All costs are expressed in block-I/O units; CPU work is translated into the
same unit via a configurable per-comparison cost.  The estimates are used
comparatively (plan A vs plan B), never as absolute predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .orders import SortOrder, lcp, subtract, subsumes


@dataclass(frozen=True)
class CostParams:
    """Knobs of the cost model.

    memory_blocks is the sort memory M; a sort whose input fits in M blocks
    is costed as CPU only.  cpu_comparison_cost converts one tuple comparison
    into I/O units.  merge_pass_constant scales the external-sort I/O term.
    """

    memory_blocks: int
    block_size: int = 4096
    cpu_comparison_cost: float = 1e-6
    merge_pass_constant: float = 1.0

    def __post_init__(self) -> None:
        if self.memory_blocks < 3:
            raise ValueError("memory_blocks must be >= 3")
        if self.block_size <= 0:
            raise ValueError("block_size must be positive")
        if self.cpu_comparison_cost < 0 or self.merge_pass_constant < 0:
            raise ValueError("cost constants must be non-negative")


@dataclass(frozen=True)
class CostEstimate:
    io_blocks: float = 0.0
    cpu_units: float = 0.0

    def __post_init__(self) -> None:
        if self.io_blocks < 0 or self.cpu_units < 0:
            raise ValueError("cost components must be non-negative")

    @property
    def total(self) -> float:
        return self.io_blocks + self.cpu_units

    def __add__(self, other: "CostEstimate") -> "CostEstimate":
        return CostEstimate(self.io_blocks + other.io_blocks, self.cpu_units + other.cpu_units)


ZERO_COST = CostEstimate()


def merge_pass_count(blocks: float, segments: int, memory_blocks: int) -> int:
    """Number of merge passes for a sort segment of blocks/segments blocks.

    Exact integer arithmetic (repeated multiplication, comparisons by
    cross-multiplying) so exact powers of the fan-in do not suffer float
    boundary errors.  Returns 0 when the segment fits in memory.
    """
    # segment_blocks <= M  <=>  blocks <= M * segments
    if blocks <= memory_blocks * segments:
        return 0
    passes = 0
    capacity = memory_blocks  # M * (M-1)^passes, in units of one segment
    while capacity * segments < blocks:
        capacity *= memory_blocks - 1
        passes += 1
    return passes


def cpu_sort_cost(n_rows: float, params: CostParams) -> float:
    """CPU cost of sorting n_rows tuples: c * N * log2(max(N, 2)).

    Depends only on the number of tuples, never on which permutation of a
    fixed attribute set is requested.
    """
    if n_rows <= 0:
        return 0.0
    return params.cpu_comparison_cost * n_rows * math.log2(max(n_rows, 2))


def sort_cost_full(n_rows: float, n_blocks: float, order: SortOrder, params: CostParams) -> CostEstimate:
    """Cost of producing `order` on an unordered input of N tuples / B blocks."""
    if n_rows <= 0 or not order:
        return ZERO_COST
    if n_blocks <= params.memory_blocks:
        return CostEstimate(0.0, cpu_sort_cost(n_rows, params))
    passes = merge_pass_count(n_blocks, 1, params.memory_blocks)
    io = params.merge_pass_constant * n_blocks * (2 * passes + 1)
    return CostEstimate(io, cpu_sort_cost(n_rows, params))


def sort_cost_partial(
    n_rows: float,
    n_blocks: float,
    d_prefix: int,
    have: SortOrder,
    want: SortOrder,
    params: CostParams,
) -> CostEstimate:
    """Cost of producing `want` when the input already holds `have`.

    The input splits into d_prefix independent segments (one per distinct
    value of the shared prefix) and each segment is sorted on the remaining
    suffix; the per-segment cost times the segment count is returned.
    Segment sizes use real division N/D, B/D, which keeps the estimate
    monotone in d_prefix.
    """
    if d_prefix < 1:
        raise ValueError("d_prefix must be >= 1")
    shared = lcp(want, have)
    suffix = subtract(want, shared)
    if n_rows <= 0 or not suffix:
        return ZERO_COST
    segment_rows = n_rows / d_prefix
    cpu = params.cpu_comparison_cost * n_rows * math.log2(max(segment_rows, 2))
    passes = merge_pass_count(n_blocks, d_prefix, params.memory_blocks)
    if passes == 0:  # every segment fits in memory: no spill at all
        return CostEstimate(0.0, cpu)
    io = params.merge_pass_constant * n_blocks * (2 * passes + 1)
    return CostEstimate(io, cpu)


def enforce_cost(
    n_rows: float,
    n_blocks: float,
    d_prefix: int,
    have: SortOrder,
    want: SortOrder,
    params: CostParams,
) -> CostEstimate:
    """Cost of an order enforcer: zero when `have` already subsumes `want`."""
    if subsumes(have, want):
        return ZERO_COST
    return sort_cost_partial(n_rows, n_blocks, d_prefix, have, want, params)


def merge_join_cost(
    left_rows: float,
    left_blocks: float,
    right_rows: float,
    right_blocks: float,
    params: CostParams,
) -> CostEstimate:
    """Cost of the merge step of a merge join on pre-sorted inputs.

    Independent of which permutation of the join attributes was chosen for
    the inputs; plan comparisons rely on this.
    """
    io = left_blocks + right_blocks
    cpu = params.cpu_comparison_cost * (left_rows + right_rows)
    return CostEstimate(io, cpu)


def prefix_saving_benefit(n_rows: float, n_blocks: float, distinct_per_attr: int, params: CostParams):
    """Benefit function mapping a shared-prefix length to enforcer savings.

    f(l) = full-sort cost minus the partial-sort cost when an l-attribute
    prefix is already shared, assuming distinct_per_attr values per prefix
    attribute (so l attributes give min(N, d^l) segments).  Non-decreasing
    with f(0) = 0, as the prefix solvers require.
    """
    if distinct_per_attr < 2:
        raise ValueError("distinct_per_attr must be >= 2")
    order = SortOrder.of("a", "b")  # any two-attribute order: only lengths matter here
    full = sort_cost_full(n_rows, n_blocks, order, params).total

    def f(length: int) -> float:
        if length <= 0 or n_rows <= 0:
            return 0.0
        segments = int(min(n_rows, float(distinct_per_attr ** length)))
        partial = sort_cost_partial(
            n_rows, n_blocks, max(segments, 1), SortOrder.of("a"), order, params
        ).total
        return max(0.0, full - partial)

    return f
