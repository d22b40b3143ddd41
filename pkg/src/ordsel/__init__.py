"""Sort-order selection for merge joins plus partial-sort-aware external sorting."""

from .orders import (
    Attribute,
    SortOrder,
    EMPTY_ORDER,
    subsumes,
    lcp,
    lcp_in_set,
    concat,
    subtract,
    canonical_permutation,
)
from .costs import CostParams, CostEstimate, sort_cost_full, sort_cost_partial, merge_join_cost

__all__ = [
    "Attribute",
    "SortOrder",
    "EMPTY_ORDER",
    "subsumes",
    "lcp",
    "lcp_in_set",
    "concat",
    "subtract",
    "canonical_permutation",
    "CostParams",
    "CostEstimate",
    "sort_cost_full",
    "sort_cost_partial",
    "merge_join_cost",
]
