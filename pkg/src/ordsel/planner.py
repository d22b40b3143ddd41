"""Two-phase plan construction over a fixed join tree.

Phase 1 is a memoized goal-driven search: each (expression, required order)
goal tries merge joins over a small set of candidate join orders plus full
or partial sort enforcers, and keeps the cheapest combination.  Phase 2
revisits the chosen join orders: attributes not pinned by any input
favorable order are re-permuted with the tree prefix solver so adjacent
joins share longer prefixes, and the plan is rebuilt if that is cheaper.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

from .catalog import Catalog
from .costs import (
    CostEstimate,
    CostParams,
    ZERO_COST,
    merge_join_cost,
    prefix_saving_benefit,
    sort_cost_partial,
)
from .favorable import compute_favorable_orders, ford_min_exact, interesting_orders
from .orders import SortOrder, EMPTY_ORDER, concat, lcp, lcp_in_set, subsumes
from .prefix import PrefixInstance, identity_benefit, solve_tree_half_approx
from .query import (
    BaseRelation,
    Expression,
    GroupBy,
    Join,
    Project,
    QuerySpec,
    Select,
    StatsModel,
    build_equivalence_classes,
    iter_nodes,
    representative_join_set,
)


@dataclass(frozen=True)
class PlanNode:
    kind: str  # table_access | sort | merge_join | group_by | project
    expr_id: int
    output_order: SortOrder
    local_cost: CostEstimate
    cost: CostEstimate  # subtree total, local included
    rows: float
    blocks: float
    children: tuple = ()
    relation: str | None = None
    access: str | None = None
    sort_from: SortOrder | None = None
    sort_to: SortOrder | None = None
    partial: bool | None = None
    segments: int | None = None
    join_order: SortOrder | None = None
    group_order: SortOrder | None = None
    input_stats: tuple = ()  # (rows, blocks) per child, for recomputation

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def to_dict(self) -> dict:
        doc: dict = {
            "kind": self.kind,
            "output_order": self.output_order.to_strings(),
            "cost": _cost_dict(self.cost),
            "local_cost": _cost_dict(self.local_cost),
            "rows": self.rows,
            "blocks": self.blocks,
        }
        if self.relation is not None:
            doc["relation"] = self.relation
            doc["access"] = self.access
        if self.kind == "sort":
            doc["from"] = self.sort_from.to_strings()
            doc["to"] = self.sort_to.to_strings()
            doc["partial"] = self.partial
            doc["segments"] = self.segments
        if self.join_order is not None:
            doc["join_order"] = self.join_order.to_strings()
        if self.group_order is not None:
            doc["group_order"] = self.group_order.to_strings()
        if self.input_stats:
            doc["input_stats"] = [list(pair) for pair in self.input_stats]
        if self.children:
            doc["children"] = [c.to_dict() for c in self.children]
        return doc

    def render(self, indent: int = 0) -> str:
        pad = "  " * indent
        if self.kind == "table_access":
            head = f"TableAccess[{self.relation}] via {self.access}"
        elif self.kind == "sort":
            flavor = "partial" if self.partial else "full"
            head = f"Sort[{flavor}] {self.sort_from} -> {self.sort_to}"
        elif self.kind == "merge_join":
            head = f"MergeJoin on {self.join_order}"
        elif self.kind == "group_by":
            head = f"GroupBy on {self.group_order}"
        else:
            head = "Project"
        line = (
            f"{pad}{head}  order={self.output_order} rows={self.rows:.0f} "
            f"cost={self.cost.total:.3f}"
        )
        return "\n".join([line] + [c.render(indent + 1) for c in self.children])


def _cost_dict(cost: CostEstimate) -> dict:
    return {"io_blocks": cost.io_blocks, "cpu_units": cost.cpu_units, "total": cost.total}


class Planner:
    """One optimization run: a query, a catalog, cost parameters.

    strategy selects how join (and group-by) candidate orders are produced:
    "afm" uses the favorable-order approximation, "exhaustive" enumerates
    every permutation of the join attribute set, "ford-min" computes the
    exact minimal favorable orders of the inputs (small instances only).
    forced_orders maps expression node ids to one pinned order, bypassing
    enumeration at those nodes.
    """

    def __init__(
        self,
        query: QuerySpec,
        catalog: Catalog,
        params: CostParams,
        strategy: str = "afm",
        forced_orders: dict | None = None,
    ):
        if strategy not in ("afm", "exhaustive", "ford-min"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.query = query
        self.catalog = catalog
        self.params = params
        self.strategy = strategy
        self.forced_orders = dict(forced_orders or {})
        self.eq = build_equivalence_classes(query.tree)
        self.stats = StatsModel(catalog, self.eq)
        self.favorable = compute_favorable_orders(query.tree, catalog, self.eq, self.stats)
        self.memo: dict = {}
        self.candidate_log: dict = {}
        self._exact_planner: Planner | None = None
        self._fordmin_cache: dict = {}

    # -- public entry points --------------------------------------------------

    def optimize(self) -> PlanNode:
        required = self.eq.rewrite(self.query.order_by)
        return self.goal(self.query.tree, required)

    def required_root_order(self) -> SortOrder:
        return self.eq.rewrite(self.query.order_by)

    def explain(self) -> dict:
        favorable = {}
        for expr in iter_nodes(self.query.tree):
            favorable[str(expr.node_id)] = {
                "kind": expr.kind,
                "orders": [o.to_strings() for o in self.favorable[expr.node_id]],
            }
        return {
            "favorable_orders": favorable,
            "interesting_orders": {
                str(expr_id): {
                    goal: [o.to_strings() for o in orders]
                    for goal, orders in sorted(goals.items())
                }
                for expr_id, goals in sorted(self.candidate_log.items())
            },
        }

    # -- goal-driven search ----------------------------------------------------

    def goal(self, expr: Expression, order: SortOrder) -> PlanNode:
        key = (expr.node_id, order.attrs)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if isinstance(expr, BaseRelation):
            plan = self._goal_base(expr, order)
        elif isinstance(expr, (Select, Project)):
            plan = self._goal_unary(expr, order)
        elif isinstance(expr, Join):
            plan = self._goal_join(expr, order)
        elif isinstance(expr, GroupBy):
            plan = self._goal_group(expr, order)
        else:  # pragma: no cover
            raise TypeError(expr)
        self.memo[key] = plan
        return plan

    def _goal_base(self, expr: BaseRelation, order: SortOrder) -> PlanNode:
        rel = expr.relation
        rep_schema = self.stats.rep_schema(expr)
        rows, blocks = self.stats.rows(expr), self.stats.blocks(expr)
        accesses: list[PlanNode] = []

        def table_node(out_order: SortOrder, io: float, access: str) -> PlanNode:
            cost = CostEstimate(io, 0.0)
            return PlanNode(
                kind="table_access",
                expr_id=expr.node_id,
                output_order=out_order,
                local_cost=cost,
                cost=cost,
                rows=rows,
                blocks=blocks,
                relation=rel.name,
                access=access,
            )

        scan_order = lcp_in_set(self.eq.rewrite(rel.clustering), rep_schema)
        accesses.append(table_node(scan_order, float(rel.blocks), "clustered scan"))
        for index in rel.indices:
            if not index.covers(expr.schema):
                continue
            key_order = lcp_in_set(self.eq.rewrite(index.key), rep_schema)
            io = rel.index_scan_blocks(index, self.catalog.block_size)
            accesses.append(
                table_node(key_order, io, f"index({','.join(index.key.to_strings())})")
            )
        return self._cheapest(self._enforced(a, order, expr) for a in accesses)

    def _goal_unary(self, expr: Expression, order: SortOrder) -> PlanNode:
        child = expr.children[0]
        below = self._wrap_unary(expr, self.goal(child, order))
        above = self._wrap_unary(expr, self.goal(child, EMPTY_ORDER))
        return self._cheapest(
            self._enforced(p, order, expr) for p in (below, above)
        )

    def _wrap_unary(self, expr: Expression, child_plan: PlanNode) -> PlanNode:
        if isinstance(expr, Select):
            # No plan operator: a selection only changes the statistics that
            # downstream enforcers see.
            return child_plan
        out = lcp_in_set(child_plan.output_order, self.stats.rep_schema(expr))
        return PlanNode(
            kind="project",
            expr_id=expr.node_id,
            output_order=out,
            local_cost=ZERO_COST,
            cost=child_plan.cost,
            rows=self.stats.rows(expr),
            blocks=self.stats.blocks(expr),
            children=(child_plan,),
        )

    def _goal_join(self, expr: Join, order: SortOrder) -> PlanNode:
        left, right = expr.children
        join_attrs = representative_join_set(expr, self.eq)
        candidates = self._join_candidates(expr, join_attrs, order)
        self.candidate_log.setdefault(expr.node_id, {})[str(order)] = candidates

        in_stats = (
            (self.stats.rows(left), self.stats.blocks(left)),
            (self.stats.rows(right), self.stats.blocks(right)),
        )
        local = merge_join_cost(
            in_stats[0][0], in_stats[0][1], in_stats[1][0], in_stats[1][1], self.params
        )
        plans = []
        for join_order in candidates:
            l = self.goal(left, join_order)
            r = self.goal(right, join_order)
            node = PlanNode(
                kind="merge_join",
                expr_id=expr.node_id,
                output_order=join_order,
                local_cost=local,
                cost=l.cost + r.cost + local,
                rows=self.stats.rows(expr),
                blocks=self.stats.blocks(expr),
                children=(l, r),
                join_order=join_order,
                input_stats=in_stats,
            )
            plans.append(self._enforced(node, order, expr))
        return self._cheapest(plans)

    def _goal_group(self, expr: GroupBy, order: SortOrder) -> PlanNode:
        child = expr.children[0]
        group_attrs = self.eq.rewrite_set(expr.keys)
        candidates = self._group_candidates(expr, group_attrs, order)
        self.candidate_log.setdefault(expr.node_id, {})[str(order)] = candidates

        child_stats = (self.stats.rows(child), self.stats.blocks(child))
        local = CostEstimate(0.0, self.params.cpu_comparison_cost * child_stats[0])
        plans = []
        for group_order in candidates:
            c = self.goal(child, group_order)
            node = PlanNode(
                kind="group_by",
                expr_id=expr.node_id,
                output_order=group_order,
                local_cost=local,
                cost=c.cost + local,
                rows=self.stats.rows(expr),
                blocks=self.stats.blocks(expr),
                children=(c,),
                group_order=group_order,
                input_stats=(child_stats,),
            )
            plans.append(self._enforced(node, order, expr))
        return self._cheapest(plans)

    # -- candidate orders -------------------------------------------------------

    def _join_candidates(
        self, expr: Join, join_attrs: frozenset, order: SortOrder
    ) -> tuple[SortOrder, ...]:
        forced = self.forced_orders.get(expr.node_id)
        if forced is not None:
            return (forced,)
        left, right = expr.children
        if self.strategy == "exhaustive":
            return _all_permutations(join_attrs)
        if self.strategy == "ford-min":
            return interesting_orders(
                join_attrs, order, self._ford_min(left), self._ford_min(right)
            )
        return interesting_orders(
            join_attrs,
            order,
            self.favorable[left.node_id],
            self.favorable[right.node_id],
        )

    def _group_candidates(
        self, expr: GroupBy, group_attrs: frozenset, order: SortOrder
    ) -> tuple[SortOrder, ...]:
        forced = self.forced_orders.get(expr.node_id)
        if forced is not None:
            return (forced,)
        child = expr.children[0]
        if self.strategy == "exhaustive":
            return _all_permutations(group_attrs)
        if self.strategy == "ford-min":
            return interesting_orders(group_attrs, order, self._ford_min(child), ())
        return interesting_orders(
            group_attrs, order, self.favorable[child.node_id], ()
        )

    def _ford_min(self, expr: Expression) -> tuple[SortOrder, ...]:
        cached = self._fordmin_cache.get(expr.node_id)
        if cached is not None:
            return cached
        if self._exact_planner is None:
            exact = Planner(self.query, self.catalog, self.params, strategy="exhaustive")
            self._exact_planner = exact
        exact = self._exact_planner

        def cbp(order: SortOrder) -> float:
            return exact.goal(expr, order).cost.total

        def coe(have: SortOrder, want: SortOrder) -> float:
            return self._enforcer_cost(expr, have, want).total

        result = ford_min_exact(self.stats.rep_schema(expr), cbp, coe)
        self._fordmin_cache[expr.node_id] = result
        return result

    # -- enforcers ---------------------------------------------------------------

    def _segments(self, expr: Expression, shared: SortOrder) -> int:
        if not shared:
            return 1
        return max(1, round(self.stats.distinct_set(expr, shared.attr_set)))

    def _enforcer_cost(self, expr: Expression, have: SortOrder, want: SortOrder) -> CostEstimate:
        if subsumes(have, want):
            return ZERO_COST
        shared = lcp(want, have)
        return sort_cost_partial(
            self.stats.rows(expr),
            self.stats.blocks(expr),
            self._segments(expr, shared),
            have,
            want,
            self.params,
        )

    def _enforced(self, plan: PlanNode, order: SortOrder, expr: Expression) -> PlanNode:
        if subsumes(plan.output_order, order):
            return plan
        shared = lcp(order, plan.output_order)
        segments = self._segments(expr, shared)
        cost = sort_cost_partial(
            self.stats.rows(expr),
            self.stats.blocks(expr),
            segments,
            plan.output_order,
            order,
            self.params,
        )
        return PlanNode(
            kind="sort",
            expr_id=expr.node_id,
            output_order=order,
            local_cost=cost,
            cost=plan.cost + cost,
            rows=self.stats.rows(expr),
            blocks=self.stats.blocks(expr),
            children=(plan,),
            sort_from=plan.output_order,
            sort_to=order,
            partial=bool(shared),
            segments=segments,
        )

    @staticmethod
    def _cheapest(plans: Iterable[PlanNode]) -> PlanNode:
        best = None
        for plan in plans:
            if best is None or plan.cost.total < best.cost.total - 1e-12:
                best = plan
        if best is None:
            raise AssertionError("no candidate plans")
        return best


def _all_permutations(attrs: frozenset) -> tuple[SortOrder, ...]:
    ordered = sorted(attrs, key=lambda a: a.sort_key)
    return tuple(SortOrder(p) for p in itertools.permutations(ordered))


# -- phase 2: free-attribute refinement -----------------------------------------


@dataclass
class RefineOptions:
    benefit: str = "cost"  # "cost" | "identity"
    include_group_by: bool = False
    max_rounds: int = 8


def refine(
    plan: PlanNode,
    planner: Planner,
    options: RefineOptions | None = None,
) -> PlanNode:
    """Phase-2 refinement: coordinate free attributes across adjacent joins.

    For every join, the attributes beyond the longest prefix pinned by an
    input favorable order are free; their permutation is recomputed with the
    half-benefit tree solver so adjacent joins share prefixes, the plan is
    rebuilt with the proposed orders forced, and the result replaces the
    input plan only when strictly cheaper.  Iterates to a fixpoint, so the
    refinement is idempotent and never increases cost.
    """
    options = options or RefineOptions()
    current = plan
    for _ in range(options.max_rounds):
        proposal = _propose_orders(current, planner, options)
        if not proposal:
            break
        rebuilt_planner = Planner(
            planner.query,
            planner.catalog,
            planner.params,
            strategy=planner.strategy,
            forced_orders=proposal,
        )
        candidate = rebuilt_planner.optimize()
        if candidate.cost.total < current.cost.total - 1e-9:
            current = candidate
        else:
            break
    return current


def _propose_orders(plan: PlanNode, planner: Planner, options: RefineOptions) -> dict:
    nodes = {
        n.expr_id: n
        for n in plan.walk()
        if n.kind == "merge_join"
        or (options.include_group_by and n.kind == "group_by")
    }
    if len(nodes) < 2:
        return {}

    exprs = {
        e.node_id: e
        for e in iter_nodes(planner.query.tree)
        if e.node_id in nodes
    }
    # Edges join each refinable node to its nearest refinable ancestor.
    parent_of: dict[int, int] = {}
    order_ids: list[int] = []

    def descend(expr: Expression, ancestor: int | None) -> None:
        here = ancestor
        if expr.node_id in nodes:
            order_ids.append(expr.node_id)
            if ancestor is not None:
                parent_of[expr.node_id] = ancestor
            here = expr.node_id
        for child in expr.children:
            descend(child, here)

    descend(planner.query.tree, None)

    chosen_order = {
        expr_id: (node.join_order if node.kind == "merge_join" else node.group_order)
        for expr_id, node in nodes.items()
    }
    fixed: dict[int, SortOrder] = {}
    free_sets: dict[int, frozenset] = {}
    for expr_id in order_ids:
        expr = exprs[expr_id]
        current = chosen_order[expr_id]
        pool: list[SortOrder] = []
        for child in expr.children:
            pool.extend(planner.favorable[child.node_id])
        best_prefix = EMPTY_ORDER
        for q in sorted(set(pool), key=lambda o: tuple(a.sort_key for a in o.attrs)):
            shared = lcp(current, q)
            if len(shared) > len(best_prefix):
                best_prefix = shared
        fixed[expr_id] = best_prefix
        free_sets[expr_id] = current.attr_set - best_prefix.attr_set

    index_of = {expr_id: i for i, expr_id in enumerate(order_ids)}
    edges = tuple(
        (index_of[parent], index_of[child]) for child, parent in parent_of.items()
    )
    instance = PrefixInstance(
        tuple(free_sets[i] for i in order_ids),
        edges,
        _refine_benefit(plan, nodes, parent_of, options, planner.params),
    )
    solved = solve_tree_half_approx(instance, root=0)

    proposal = {}
    for expr_id, perm in zip(order_ids, solved.permutations):
        new_order = concat(fixed[expr_id], perm)
        if new_order != chosen_order[expr_id]:
            proposal[expr_id] = new_order
    if not proposal:
        return {}
    # Forced orders must cover every refinable node so the rebuild keeps the
    # untouched ones stable.
    for expr_id in order_ids:
        proposal.setdefault(expr_id, chosen_order[expr_id])
    return proposal


def _refine_benefit(plan, nodes, parent_of, options: RefineOptions, params: CostParams):
    if options.benefit == "identity":
        return identity_benefit
    # Cost-derived benefit: savings of an l-attribute shared prefix for an
    # edge of average size.  The per-attribute distinct factor assumes the
    # child result spreads uniformly over its order attributes.
    child_nodes = [nodes[child] for child in parent_of]
    if not child_nodes:
        return identity_benefit
    mean_rows = sum(n.rows for n in child_nodes) / len(child_nodes)
    mean_blocks = sum(n.blocks for n in child_nodes) / len(child_nodes)
    width = max(
        (len(n.join_order or n.group_order or EMPTY_ORDER) for n in nodes.values()),
        default=2,
    )
    per_attr = max(2, int(round(max(mean_rows, 2.0) ** (1.0 / max(width, 1)))))
    return prefix_saving_benefit(mean_rows, mean_blocks, per_attr, params)


# -- plan recosting ---------------------------------------------------------------


def cost_plan(plan: PlanNode, params: CostParams) -> CostEstimate:
    """Recompute a plan's total cost bottom-up from node-local data."""
    total = ZERO_COST
    for child in plan.children:
        total = total + cost_plan(child, params)
    if plan.kind == "sort":
        local = sort_cost_partial(
            plan.rows, plan.blocks, plan.segments or 1, plan.sort_from, plan.sort_to, params
        )
    elif plan.kind == "merge_join":
        (lr, lb), (rr, rb) = plan.input_stats
        local = merge_join_cost(lr, lb, rr, rb, params)
    elif plan.kind == "group_by":
        ((cr, _),) = plan.input_stats
        local = CostEstimate(0.0, params.cpu_comparison_cost * cr)
    elif plan.kind == "project":
        local = ZERO_COST
    else:  # table_access: access-path I/O is a leaf datum
        local = plan.local_cost
    return total + local


def plan_to_json(plan: PlanNode) -> dict:
    return plan.to_dict()


def plan_from_json(doc: dict) -> PlanNode:
    """Rebuild a plan tree from its JSON form (costs recomputable)."""
    children = tuple(plan_from_json(c) for c in doc.get("children", []))
    return PlanNode(
        kind=doc["kind"],
        expr_id=-1,
        output_order=SortOrder.from_strings(doc["output_order"]),
        local_cost=CostEstimate(doc["local_cost"]["io_blocks"], doc["local_cost"]["cpu_units"]),
        cost=CostEstimate(doc["cost"]["io_blocks"], doc["cost"]["cpu_units"]),
        rows=doc["rows"],
        blocks=doc["blocks"],
        children=children,
        relation=doc.get("relation"),
        access=doc.get("access"),
        sort_from=SortOrder.from_strings(doc["from"]) if "from" in doc else None,
        sort_to=SortOrder.from_strings(doc["to"]) if "to" in doc else None,
        partial=doc.get("partial"),
        segments=doc.get("segments"),
        join_order=SortOrder.from_strings(doc["join_order"]) if "join_order" in doc else None,
        group_order=SortOrder.from_strings(doc["group_order"]) if "group_order" in doc else None,
        input_stats=tuple(tuple(pair) for pair in doc.get("input_stats", [])),
    )


def plan_to_dot(plan: PlanNode) -> str:
    lines = ["digraph plan {", "  node [shape=box];"]
    counter = itertools.count()

    def emit(node: PlanNode) -> int:
        me = next(counter)
        label = node.render().splitlines()[0].strip().replace('"', "'")
        lines.append(f'  n{me} [label="{label}"];')
        for child in node.children:
            cid = emit(child)
            lines.append(f"  n{me} -> n{cid};")
        return me

    emit(plan)
    lines.append("}")
    return "\n".join(lines)
