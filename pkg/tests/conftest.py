import pytest

from ordsel.catalog import parse_catalog
from ordsel.query import parse_query


def make_catalog(doc):
    return parse_catalog(doc)


def make_query(doc, catalog):
    return parse_query(doc, catalog)


@pytest.fixture
def b1_catalog():
    """Desk-scale analog of the out-of-stock experiment: partsupp clustered on
    its key, covering secondary indices on the supplier-key prefix."""
    return parse_catalog(
        {
            "block_size": 4096,
            "memory_blocks": 100,
            "cpu_unit": 1e-4,
            "relations": [
                {
                    "name": "lineitem",
                    "tuples": 60000,
                    "blocks": 1600,
                    "avg_tuple_bytes": 108,
                    "columns": ["l_orderkey", "l_partkey", "l_suppkey", "l_quantity"],
                    "clustering": ["lineitem.l_orderkey"],
                    "indices": [
                        {
                            "key": ["lineitem.l_suppkey"],
                            "include": ["lineitem.l_partkey", "lineitem.l_quantity"],
                        }
                    ],
                    "distinct": {"l_suppkey": 100, "l_partkey": 2000},
                },
                {
                    "name": "partsupp",
                    "tuples": 8000,
                    "blocks": 300,
                    "avg_tuple_bytes": 144,
                    "columns": ["ps_partkey", "ps_suppkey", "ps_availqty"],
                    "clustering": ["partsupp.ps_partkey", "partsupp.ps_suppkey"],
                    "indices": [
                        {
                            "key": ["partsupp.ps_suppkey"],
                            "include": ["partsupp.ps_partkey", "partsupp.ps_availqty"],
                        }
                    ],
                    "distinct": {"ps_partkey": 2000, "ps_suppkey": 100},
                },
            ],
        }
    )


@pytest.fixture
def b1_query_doc():
    return {
        "join": {
            "left": {"relation": "partsupp"},
            "right": {"relation": "lineitem"},
            "on": [
                ["partsupp.ps_suppkey", "lineitem.l_suppkey"],
                ["partsupp.ps_partkey", "lineitem.l_partkey"],
            ],
        },
        "group_by": [
            "partsupp.ps_availqty",
            "partsupp.ps_partkey",
            "partsupp.ps_suppkey",
        ],
        "aggregates": ["sum(lineitem.l_quantity)"],
        "order_by": ["partsupp.ps_partkey"],
    }


def chain_catalog(n_relations=4, tuples=20000, blocks=500, distinct=30, clustering=None):
    """Identical unindexed relations c1..c5 for join-chain experiments."""
    relations = []
    for i in range(1, n_relations + 1):
        name = f"r{i}"
        rel = {
            "name": name,
            "tuples": tuples,
            "blocks": blocks,
            "avg_tuple_bytes": 100,
            "columns": ["c1", "c2", "c3", "c4", "c5"],
            "distinct": {c: distinct for c in ["c1", "c2", "c3", "c4", "c5"]},
        }
        if clustering:
            rel["clustering"] = [f"{name}.{clustering}"]
        relations.append(rel)
    return parse_catalog(
        {
            "block_size": 4096,
            "memory_blocks": 100,
            "cpu_unit": 1e-4,
            "relations": relations,
        }
    )


def chain_query_doc(join_columns):
    """Left-deep chain r1 x r2 x ... with the given per-join column triples."""
    node = {"relation": "r1"}
    for i, cols in enumerate(join_columns, start=2):
        node = {
            "join": {
                "left": node,
                "right": {"relation": f"r{i}"},
                "on": [[f"r1.{c}", f"r{i}.{c}"] for c in cols],
            }
        }
    return node


@pytest.fixture
def car_catalog():
    """The three-relation catalog/rating example; the city column is named
    "county" so the canonical (lexicographic) permutations reproduce the
    published favorable-order sets position for position."""
    return parse_catalog(
        {
            "block_size": 4096,
            "memory_blocks": 10000,
            "cpu_unit": 1e-4,
            "relations": [
                {
                    "name": "catalog1",
                    "tuples": 200000,
                    "blocks": 5000,
                    "avg_tuple_bytes": 100,
                    "columns": ["year", "make", "color", "county", "sellreason"],
                    "clustering": ["catalog1.year"],
                    "distinct": {"year": 50, "make": 100, "color": 20, "county": 500},
                },
                {
                    "name": "catalog2",
                    "tuples": 200000,
                    "blocks": 4000,
                    "avg_tuple_bytes": 80,
                    "columns": ["year", "make", "color", "county", "breakdowns"],
                    "clustering": ["catalog2.make"],
                    "distinct": {"year": 50, "make": 100, "color": 20, "county": 500},
                },
                {
                    "name": "rating",
                    "tuples": 5000,
                    "blocks": 100,
                    "avg_tuple_bytes": 40,
                    "columns": ["make", "year", "rating"],
                    "indices": [
                        {
                            "key": ["rating.make"],
                            "include": ["rating.year", "rating.rating"],
                        }
                    ],
                    "distinct": {"make": 100, "year": 50},
                },
            ],
        }
    )


@pytest.fixture
def car_query_doc():
    return {
        "join": {
            "left": {
                "join": {
                    "left": {"relation": "catalog1"},
                    "right": {"relation": "catalog2"},
                    "on": [
                        ["catalog1.county", "catalog2.county"],
                        ["catalog1.make", "catalog2.make"],
                        ["catalog1.year", "catalog2.year"],
                        ["catalog1.color", "catalog2.color"],
                    ],
                }
            },
            "right": {"relation": "rating"},
            "on": [
                ["catalog1.make", "rating.make"],
                ["catalog1.year", "rating.year"],
            ],
        },
        "order_by": [
            "catalog1.make",
            "catalog1.year",
            "catalog1.color",
            "catalog1.county",
            "catalog1.sellreason",
            "catalog2.breakdowns",
            "rating.rating",
        ],
    }
