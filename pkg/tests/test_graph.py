import random

import pytest

from dmrkit.graph import (
    DmrGraph,
    Edge,
    GraphError,
    Node,
    NodeKind,
    ReferTarget,
    graph_from_json,
    graph_to_json,
    read_graph,
    to_triples,
    write_graph,
)
from dmrkit.metrics import smatch
from dmrkit.synth import random_valid_graph

REF_EXAMPLE = (
    "(v1 / OrderIntent :order-item (v2 / reference :refer (T:3 N:v1) "
    ":mod (v3 / large || Size)))"
)


def test_read_reference_example():
    g = read_graph(REF_EXAMPLE, turn=5)
    assert len(g.nodes) == 3
    assert g.root == "v1"
    refs = [e for e in g.edges if e.is_refer]
    assert refs == [Edge("v2", "refer", ReferTarget(3, "v1"))]
    assert g.nodes["v2"].kind is NodeKind.OPERATOR
    assert g.nodes["v3"].lexical_value == "large"
    assert g.nodes["v3"].type_name == "Size"


def test_read_minimal_graph():
    g = read_graph("(v1 / ThankYouIntent)")
    assert list(g.nodes) == ["v1"]
    assert g.nodes["v1"].kind is NodeKind.INTENT


def test_read_multiword_lexical_value():
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / Veg Out || Pizza :mod (v3 / large || Size)))"
    )
    assert g.nodes["v2"].lexical_value == "Veg Out"
    assert g.nodes["v2"].type_name == "Pizza"
    assert g.nodes["v2"].kind is NodeKind.ENTITY


def test_read_three_segment_payload():
    g = read_graph("(v1 / OrderIntent :order-item (v2 / big mac || Burger-1 || Burger))")
    node = g.nodes["v2"]
    assert node.lexical_value == "big mac"
    assert node.canonical_value == "Burger-1"
    assert node.type_name == "Burger"


def test_read_rejects_unbalanced():
    with pytest.raises(GraphError, match="unbalanced"):
        read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger)")


def test_read_rejects_duplicate_variable():
    with pytest.raises(GraphError, match="duplicate"):
        read_graph("(v1 / OrderIntent :order-item (v1 / burger || Burger))")


def test_read_rejects_undefined_reentrant_target():
    with pytest.raises(GraphError, match="undefined"):
        read_graph("(v1 / OrderIntent :order-item v9)")


def test_read_rejects_entity_root():
    with pytest.raises(GraphError, match="root-kind"):
        read_graph("(v1 / burger || Burger)")


def test_reentrancy_roundtrip():
    g = read_graph(
        "(v1 / and :op1 (v2 / OrderIntent :order-item (v4 / coke || DrinkItem)) "
        ":op2 (v3 / OrderIntent :order-item v4))"
    )
    text = write_graph(g)
    assert text.count("coke") == 1  # expanded once, bare var afterwards
    again = read_graph(text)
    assert smatch(again, g).f1 == 1


def test_polarity_keyword_edge():
    g = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger :polarity -))")
    kw = [e for e in g.edges if e.targets_keyword]
    assert kw == [Edge("v2", "polarity", "-")]
    triples = to_triples(g)
    assert ("polarity", "v2", "-") in {t.as_tuple() for t in triples}


def test_polarity_must_target_keyword():
    with pytest.raises(GraphError, match="polarity"):
        DmrGraph(
            0,
            "v1",
            {
                "v1": Node("v1", NodeKind.INTENT, "OrderIntent"),
                "v2": Node("v2", NodeKind.ENTITY, "Burger"),
            },
            (Edge("v1", "polarity", "v2"),),
        )


def test_cycle_rejected():
    nodes = {
        "v1": Node("v1", NodeKind.INTENT, "OrderIntent"),
        "v2": Node("v2", NodeKind.ENTITY, "Burger", "b"),
        "v3": Node("v3", NodeKind.ENTITY, "Size", "large"),
    }
    edges = (
        Edge("v1", "order-item", "v2"),
        Edge("v2", "mod", "v3"),
        Edge("v3", "mod", "v2"),  # back edge
    )
    with pytest.raises(GraphError, match="cycle"):
        DmrGraph(0, "v1", nodes, edges)


def test_unreachable_node_rejected():
    nodes = {
        "v1": Node("v1", NodeKind.INTENT, "OrderIntent"),
        "v2": Node("v2", NodeKind.ENTITY, "Burger", "b"),
    }
    with pytest.raises(GraphError, match="unreachable"):
        DmrGraph(0, "v1", nodes, ())


def test_refer_only_from_reference_nodes():
    nodes = {
        "v1": Node("v1", NodeKind.INTENT, "OrderIntent"),
        "v2": Node("v2", NodeKind.ENTITY, "Burger", "b"),
    }
    edges = (
        Edge("v1", "order-item", "v2"),
        Edge("v2", "refer", ReferTarget(0, "v1")),
    )
    with pytest.raises(GraphError, match="reference"):
        DmrGraph(1, "v1", nodes, edges)


def test_refer_target_turn_must_precede():
    with pytest.raises(GraphError, match="turn"):
        read_graph("(v1 / OrderIntent :order-item (v2 / reference :refer (T:5 N:v1)))", turn=3)


def test_triples_example():
    g = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    got = {t.as_tuple() for t in to_triples(g)}
    assert got == {
        ("instance", "v1", "OrderIntent"),
        ("top", "v1", "top"),
        ("order-item", "v1", "v2"),
        ("instance", "v2", "Burger"),
        ("lex", "v2", "burger"),
    }


def test_triples_minimal():
    assert len(to_triples(read_graph("(v1 / PaymentIntent)"))) == 2


def test_refer_attr_serialization():
    g = read_graph(REF_EXAMPLE, turn=5)
    with_refer = {t.as_tuple() for t in to_triples(g, include_refer=True)}
    without = {t.as_tuple() for t in to_triples(g, include_refer=False)}
    assert ("refer", "v2", "T:3 N:v1") in with_refer
    assert not any(rel == "refer" for rel, _, _ in without)


def test_triple_count_formula(random_graphs):
    for g in random_graphs[:80]:
        triples = to_triples(g, include_refer=True)
        n_lex = sum(1 for n in g.nodes.values() if n.lexical_value is not None)
        n_canon = sum(1 for n in g.nodes.values() if n.canonical_value is not None)
        expected = len(g.nodes) + 1 + n_lex + n_canon + len(g.edges)
        assert len(triples) == expected


def test_write_read_roundtrip_random(fastfood, random_graphs):
    for g in random_graphs:
        again = read_graph(write_graph(g), turn=g.turn, ontology=fastfood)
        assert smatch(again, g, include_refer=True).f1 == 1


def test_json_interchange_roundtrip(random_graphs):
    for g in random_graphs[:50]:
        record = graph_to_json(g)
        back = graph_from_json(record)
        assert back == g


def test_single_node_write():
    assert write_graph(read_graph("(v1 / ThankYouIntent)")) == "(v1 / ThankYouIntent)"


def test_conjunction_write():
    g = read_graph(
        "(v1 / and :op1 (v2 / OrderIntent :order-item (v3 / sandwich || Sandwich)) "
        ":op2 (v4 / ThankYouIntent))"
    )
    text = write_graph(g)
    assert ":op1" in text and ":op2" in text
    assert smatch(read_graph(text), g).f1 == 1
