import pytest

from ordsel.catalog import parse_catalog
from ordsel.favorable import (
    ford_min_exact,
    interesting_orders,
    parameter_sort_orders,
)
from ordsel.orders import Attribute, SortOrder, EMPTY_ORDER
from ordsel.planner import Planner
from ordsel.prefix import TooLargeError
from ordsel.query import StatsModel, build_equivalence_classes, iter_nodes, parse_query


def O(*names):
    return SortOrder.of(*names)


def A(name):
    return Attribute.parse(name)


def shorthand(order, mapping):
    return "(" + ",".join(mapping[a.column] for a in order.attrs) + ")"


CAR_SHORTHAND = {
    "year": "y",
    "make": "m",
    "color": "co",
    "county": "c",
    "sellreason": "sr",
    "breakdowns": "bd",
    "rating": "rt",
}


def single_relation_catalog(clustering=("r.a",), indices=(), columns=("a", "b", "c")):
    return parse_catalog(
        {
            "block_size": 4096,
            "memory_blocks": 10,
            "cpu_unit": 1e-4,
            "relations": [
                {
                    "name": "r",
                    "tuples": 10000,
                    "blocks": 500,
                    "avg_tuple_bytes": 99,
                    "columns": list(columns),
                    "clustering": list(clustering),
                    "indices": list(indices),
                    "distinct": {c: 50 for c in columns},
                }
            ],
        }
    )


class TestFavorableOrderRules:
    def test_base_relation_clustering_and_covering_index(self):
        catalog = single_relation_catalog(
            clustering=("r.a",),
            indices=({"key": ["r.b", "r.c"], "include": ["r.a"]},),
        )
        query = parse_query({"relation": "r", "order_by": ["r.a", "r.b", "r.c"]}, catalog)
        planner = Planner(query, catalog, catalog.cost_params())
        assert planner.favorable[query.tree.node_id] == (O("r.a"), O("r.b", "r.c"))

    def test_non_covering_index_excluded(self):
        catalog = single_relation_catalog(
            clustering=(),
            indices=({"key": ["r.b"]},),  # does not include a or c
        )
        query = parse_query({"relation": "r", "order_by": ["r.a", "r.b", "r.c"]}, catalog)
        planner = Planner(query, catalog, catalog.cost_params())
        assert planner.favorable[query.tree.node_id] == ()

    def test_selection_passes_orders_through(self):
        catalog = single_relation_catalog()
        query = parse_query(
            {"relation": "r", "select": 0.5, "order_by": ["r.a"]}, catalog
        )
        planner = Planner(query, catalog, catalog.cost_params())
        select = query.tree
        base = select.children[0]
        assert planner.favorable[select.node_id] == planner.favorable[base.node_id]

    def test_projection_keeps_longest_visible_prefix(self):
        catalog = single_relation_catalog(clustering=("r.a", "r.b", "r.c"))
        query = parse_query(
            {"relation": "r", "project": ["r.a", "r.c"], "order_by": ["r.a"]},
            catalog,
        )
        planner = Planner(query, catalog, catalog.cost_params())
        assert planner.favorable[query.tree.node_id] == (O("r.a"),)

    def test_group_by_extends_over_grouping_attributes(self):
        catalog = single_relation_catalog(clustering=("r.a",))
        query = parse_query(
            {"relation": "r", "group_by": ["r.b", "r.a"], "order_by": ["r.a"]},
            catalog,
        )
        planner = Planner(query, catalog, catalog.cost_params())
        # clustering (a) extends to (a, b); the empty order extends to the
        # canonical (a, b); deduplicated
        assert planner.favorable[query.tree.node_id] == (O("r.a", "r.b"),)


class TestCarCatalogExample:
    def test_published_afm_sets(self, car_catalog, car_query_doc):
        query = parse_query(car_query_doc, car_catalog)
        planner = Planner(query, car_catalog, car_catalog.cost_params())
        by_kind = {}
        for expr in iter_nodes(query.tree):
            orders = {
                shorthand(o, CAR_SHORTHAND) for o in planner.favorable[expr.node_id]
            }
            if expr.kind == "BaseRelation":
                by_kind[expr.relation.name] = orders
            else:
                by_kind[f"{expr.kind}:{expr.node_id}"] = orders

        assert by_kind["catalog1"] == {"(y)"}
        assert by_kind["catalog2"] == {"(m)"}
        assert by_kind["rating"] == {"(m)"}

        joins = sorted(
            (e for e in iter_nodes(query.tree) if e.kind == "Join"),
            key=lambda e: len(e.schema),
        )
        lower, upper = joins
        lower_orders = {
            shorthand(o, CAR_SHORTHAND) for o in planner.favorable[lower.node_id]
        }
        upper_orders = {
            shorthand(o, CAR_SHORTHAND) for o in planner.favorable[upper.node_id]
        }
        assert lower_orders == {"(y)", "(m)", "(y,co,c,m)", "(m,co,c,y)"}
        assert upper_orders == {
            "(y)",
            "(m)",
            "(y,co,c,m)",
            "(m,co,c,y)",
            "(y,m)",
            "(m,y)",
        }

    def test_published_interesting_orders(self, car_catalog, car_query_doc):
        query = parse_query(car_query_doc, car_catalog)
        planner = Planner(query, car_catalog, car_catalog.cost_params())
        planner.optimize()
        joins = sorted(
            (e for e in iter_nodes(query.tree) if e.kind == "Join"),
            key=lambda e: len(e.schema),
        )
        lower, upper = joins

        upper_goals = planner.candidate_log[upper.node_id]
        assert len(upper_goals) == 1
        (top_candidates,) = upper_goals.values()
        assert {shorthand(o, CAR_SHORTHAND) for o in top_candidates} == {
            "(y,m)",
            "(m,y)",
        }

        lower_union = {
            shorthand(o, CAR_SHORTHAND)
            for orders in planner.candidate_log[lower.node_id].values()
            for o in orders
        }
        assert lower_union == {
            "(y,co,c,m)",
            "(m,co,c,y)",
            "(y,m,co,c)",
            "(m,y,co,c)",
        }


class TestInterestingOrders:
    def test_fallback_to_canonical_permutation(self):
        s = frozenset({A("a"), A("b")})
        result = interesting_orders(s, O("z"), (), ())
        assert result == (O("a", "b"),)

    def test_prefix_dominance_removed(self):
        s = frozenset({A("a"), A("b")})
        result = interesting_orders(s, EMPTY_ORDER, (O("a"), O("a", "b")), ())
        assert result == (O("a", "b"),)

    def test_members_are_full_permutations(self):
        s = frozenset({A("a"), A("b"), A("c")})
        result = interesting_orders(s, O("b"), (O("c"),), (O("a", "z"),))
        for order in result:
            assert order.attr_set == s
        assert O("b", "a", "c") in result  # required-order prefix extended
        assert O("c", "a", "b") in result
        assert O("a", "b", "c") in result


class TestFordMinExact:
    def planner_for(self, clustering, indices, order_by):
        catalog = single_relation_catalog(clustering=clustering, indices=indices)
        query = parse_query({"relation": "r", "order_by": order_by}, catalog)
        planner = Planner(query, catalog, catalog.cost_params(), strategy="ford-min")
        return planner, query.tree

    def test_clustered_relation(self):
        planner, base = self.planner_for(("r.a",), (), ["r.a", "r.b"])
        assert planner._ford_min(base) == (O("r.a"),)

    def test_heap_relation_has_none(self):
        planner, base = self.planner_for((), (), ["r.a", "r.b"])
        assert planner._ford_min(base) == ()

    def test_covering_index_shadows_its_prefix(self):
        planner, base = self.planner_for(
            ("r.a",), ({"key": ["r.a", "r.b"], "include": []},), ["r.a", "r.b"]
        )
        # the index provides (a, b) at the same cost as (a), so (a) is not
        # minimal; the clustered heap path still costs more
        assert planner._ford_min(base) == (O("r.a", "r.b"),)

    def test_enumeration_guard(self):
        schema = frozenset(A(c) for c in "abcdefgh")
        with pytest.raises(TooLargeError):
            ford_min_exact(schema, lambda o: 0.0, lambda a, b: 0.0)


class TestParameterSortOrders:
    def test_direct_mapping(self):
        inner = [O("inner.l_orderkey")]
        correlation = {A("inner.l_orderkey"): A("o_orderkey")}
        assert parameter_sort_orders(inner, correlation) == (O("o_orderkey"),)

    def test_no_correlation_only_outer(self):
        outer = [O("p_one"), O("p_two")]
        result = parameter_sort_orders([O("inner.x")], {}, outer)
        assert result == (O("p_one"), O("p_two"))

    def test_prefix_stops_at_unmapped_attribute(self):
        inner = [O("t.a", "t.b")]
        correlation = {A("t.a"): A("p_a")}
        assert parameter_sort_orders(inner, correlation) == (O("p_a"),)

    def test_union_deduplicates(self):
        inner = [O("t.a")]
        correlation = {A("t.a"): A("p_a")}
        assert parameter_sort_orders(inner, correlation, [O("p_a")]) == (O("p_a"),)
