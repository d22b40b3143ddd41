"""Favorable orders: which sort orders an expression can produce cheaply.

A sort order is favorable for an expression when producing it costs less
than producing unordered output and fully sorting it.  The exact minimal set
is intractable to compute during planning, so a bottom-up approximation is
derived from clustering orders and covering indices; the exact set is also
implemented (guarded) as a small-instance oracle.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

from .catalog import Catalog
from .orders import (
    SortOrder,
    EMPTY_ORDER,
    canonical_permutation,
    concat,
    lcp_in_set,
    subsumes,
)
from .prefix import TooLargeError
from .query import (
    BaseRelation,
    EquivalenceClasses,
    Expression,
    GroupBy,
    Join,
    Project,
    Select,
    StatsModel,
    representative_join_set,
)

FORD_ENUMERATION_LIMIT = 100_000
_TOL = 1e-9


def _order_key(order: SortOrder) -> tuple:
    return tuple(a.sort_key for a in order.attrs)


def _dedupe(orders: Iterable[SortOrder]) -> tuple[SortOrder, ...]:
    return tuple(sorted(set(orders), key=_order_key))


def extend_to_set(prefix: SortOrder, target: frozenset) -> SortOrder:
    """Extend a prefix over `target` to a full permutation of `target`."""
    return concat(prefix, canonical_permutation(target - prefix.attr_set))


def compute_favorable_orders(
    root: Expression,
    catalog: Catalog,
    eq: EquivalenceClasses,
    stats: StatsModel,
) -> dict[int, tuple[SortOrder, ...]]:
    """Approximate minimal favorable orders for every node, bottom-up.

    Base relations contribute their clustering order and the key orders of
    secondary indices that cover the query; selections pass orders through;
    projections keep the longest prefix of visible attributes; joins keep
    the input orders and extend each one's join-attribute prefix to a full
    permutation of the join attribute set; group-bys extend the input orders
    (plus the empty order) over the grouping attributes, dropping everything
    else since it does not survive the aggregation.  All orders are rewritten
    to equivalence-class representatives and all "arbitrary" extensions use
    the canonical permutation.
    """
    result: dict[int, tuple[SortOrder, ...]] = {}

    def visit(expr: Expression) -> tuple[SortOrder, ...]:
        for child in expr.children:
            visit(child)
        if isinstance(expr, BaseRelation):
            rep_schema = stats.rep_schema(expr)
            orders = []
            clustered = lcp_in_set(eq.rewrite(expr.relation.clustering), rep_schema)
            if clustered:
                orders.append(clustered)
            for index in expr.relation.indices:
                if not index.covers(expr.schema):
                    continue
                key_order = lcp_in_set(eq.rewrite(index.key), rep_schema)
                if key_order:
                    orders.append(key_order)
            computed = _dedupe(orders)
        elif isinstance(expr, Select):
            computed = result[expr.children[0].node_id]
        elif isinstance(expr, Project):
            visible = stats.rep_schema(expr)
            computed = _dedupe(
                o
                for o in (lcp_in_set(c, visible) for c in result[expr.children[0].node_id])
                if o
            )
        elif isinstance(expr, Join):
            s = representative_join_set(expr, eq)
            pool = _dedupe(
                result[expr.children[0].node_id] + result[expr.children[1].node_id]
            )
            extensions = [extend_to_set(lcp_in_set(o, s), s) for o in pool]
            computed = _dedupe(pool + tuple(extensions))
        elif isinstance(expr, GroupBy):
            l = eq.rewrite_set(expr.keys)
            pool = result[expr.children[0].node_id]
            computed = _dedupe(
                extend_to_set(lcp_in_set(o, l), l) for o in pool + (EMPTY_ORDER,)
            )
        else:  # pragma: no cover
            raise TypeError(expr)
        result[expr.node_id] = computed
        return computed

    visit(root)
    return result


def interesting_orders(
    join_attrs: frozenset,
    required: SortOrder,
    left_orders: Sequence[SortOrder],
    right_orders: Sequence[SortOrder],
) -> tuple[SortOrder, ...]:
    """Candidate permutations of the join attribute set for one merge join.

    Step 1 collects the inputs' favorable-order prefixes over the join
    attributes plus the required output order's prefix; step 2 drops any
    collected order that is a prefix of another; step 3 extends each
    survivor to a full permutation.  The required-order term degrades to the
    empty order when it shares no prefix, so the result is never empty.
    """
    collected = {lcp_in_set(o, join_attrs) for o in left_orders}
    collected |= {lcp_in_set(o, join_attrs) for o in right_orders}
    collected.add(lcp_in_set(required, join_attrs))

    survivors = [
        o
        for o in collected
        if not any(other != o and subsumes(other, o) for other in collected)
    ]
    return _dedupe(extend_to_set(o, join_attrs) for o in survivors)


def ford_min_exact(
    schema: frozenset,
    cbp: Callable[[SortOrder], float],
    coe: Callable[[SortOrder, SortOrder], float],
    limit: int = FORD_ENUMERATION_LIMIT,
) -> tuple[SortOrder, ...]:
    """Exact minimal favorable orders by enumeration (small-instance oracle).

    Enumerates every order over the schema, keeps those with positive
    benefit cbp(ε) + coe(ε, o) - cbp(o), then drops an order if a strict
    prefix reaches it at equal cost via an explicit sort, or a strict
    extension is available at the same cost.
    """
    attrs = sorted(schema, key=lambda a: a.sort_key)
    total = sum(
        _permutation_count(len(attrs), k) for k in range(1, len(attrs) + 1)
    )
    if total > limit:
        raise TooLargeError(f"{total} orders to enumerate exceeds limit {limit}")

    orders = [
        SortOrder(p)
        for k in range(1, len(attrs) + 1)
        for p in itertools.permutations(attrs, k)
    ]
    base = cbp(EMPTY_ORDER)
    ford: dict[SortOrder, float] = {}
    for o in orders:
        if base + coe(EMPTY_ORDER, o) - cbp(o) > _TOL:
            ford[o] = cbp(o)

    minimal = []
    for o, cost in ford.items():
        reachable = any(
            abs(ford[p] + coe(p, o) - cost) <= _TOL
            for p in ford
            if p != o and subsumes(o, p)
        )
        if reachable:
            continue
        shadowed = any(
            abs(ford[x] - cost) <= _TOL
            for x in ford
            if x != o and subsumes(x, o)
        )
        if not shadowed:
            minimal.append(o)
    return _dedupe(minimal)


def _permutation_count(n: int, k: int) -> int:
    count = 1
    for i in range(k):
        count *= n - i
    return count


def parameter_sort_orders(
    inner_orders: Iterable[SortOrder],
    attr_to_param: dict,
    outer_orders: Iterable[SortOrder] = (),
) -> tuple[SortOrder, ...]:
    """Interesting sort orders on the parameters of a nested expression.

    Each inner favorable order contributes its longest prefix of correlated
    attributes, rewritten to the parameters they are equated with; the
    outer side's favorable orders over the bound parameter set are unioned
    in unchanged.
    """
    derived = set()
    for order in inner_orders:
        mapped = []
        for attr in order.attrs:
            param = attr_to_param.get(attr)
            if param is None:
                break
            mapped.append(param)
        if mapped:
            derived.add(SortOrder(tuple(mapped)))
    for order in outer_orders:
        if order:
            derived.add(order)
    return _dedupe(derived)
