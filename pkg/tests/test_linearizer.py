import random

from hypothesis import given, settings, strategies as st

from dmrkit.graph import read_graph
from dmrkit.linearizer import (
    DelinearizeResult,
    FAULT_FRAME_START,
    MISSING_BRACKET,
    delinearize,
    fallback_graph,
    line_to_tokens,
    linearize,
    strip_vars,
    tokens_to_line,
)
from dmrkit.metrics import smatch
from dmrkit.ontology import FALLBACK_INTENT

PAPER_GRAPH = (
    "(v1 / OrderIntent :order-item (v2 / reference :refer (T:3 N:v1) "
    ":mod (v3 / large || Size)))"
)
PAPER_BALANCED = "( OrderIntent ( :order-item ( reference ( :mod ( large || Size ) ) ) ) )"
PAPER_UNBALANCED = "( OrderIntent ( :order-item ( reference ( :mod ( large || Size ) ) ) )"


def test_linearize_drops_refer_and_vars():
    g = read_graph(PAPER_GRAPH, turn=5)
    assert tokens_to_line(linearize(g)) == PAPER_BALANCED


def test_linearize_single_node():
    assert tokens_to_line(linearize(read_graph("(v1 / ThankYouIntent)"))) == "( ThankYouIntent )"


def test_linearize_balanced(random_graphs):
    for g in random_graphs:
        toks = linearize(g)
        assert toks.count("(") == toks.count(")")


def test_reentrant_subtree_duplicated():
    g = read_graph(
        "(v1 / and :op1 (v2 / OrderIntent :order-item (v4 / coke || DrinkItem)) "
        ":op2 (v3 / OrderIntent :order-item v4))"
    )
    toks = linearize(g)
    assert toks.count("coke") == 2


def test_delinearize_repairs_missing_bracket():
    result = delinearize(line_to_tokens(PAPER_UNBALANCED), turn=5)
    assert not result.is_fallback
    assert result.diagnostics == [MISSING_BRACKET]
    intended = read_graph(PAPER_GRAPH, turn=5)
    assert smatch(result.graph, strip_vars(intended)).f1 == 1


def test_delinearize_simple():
    result = delinearize(["(", "ThankYouIntent", ")"])
    assert not result.is_fallback
    assert result.graph.root == "v1"
    assert result.graph.nodes["v1"].type_name == "ThankYouIntent"


def test_delinearize_structural_fault_falls_back():
    result = delinearize(line_to_tokens(") ( :order-item )"))
    assert result.is_fallback
    assert FAULT_FRAME_START in result.diagnostics
    assert result.graph.nodes["v1"].type_name == FALLBACK_INTENT


def test_delinearize_redundant_bracket_dropped():
    result = delinearize(line_to_tokens(") ( ThankYouIntent )"))
    assert not result.is_fallback
    assert "redundant-bracket" in result.diagnostics


def test_delinearize_entity_root_falls_back():
    result = delinearize(line_to_tokens("( large || Size )"))
    assert result.is_fallback


def test_delinearize_empty_input_falls_back():
    result = delinearize([])
    assert result.is_fallback
    assert result.graph.nodes["v1"].type_name == FALLBACK_INTENT


def test_delinearize_accepts_penman_shorthand():
    # Labels directly inside a node frame and bare single-word children.
    result = delinearize(line_to_tokens("( OrderIntent :order-item ( burger || Burger :polarity - ) )"))
    assert not result.is_fallback
    g = result.graph
    assert g.nodes["v2"].lexical_value == "burger"
    assert any(e.label == "polarity" and e.target == "-" for e in g.edges)


def test_dfs_variable_assignment_order():
    text = "( OrderIntent ( :order-item ( burger || Burger ( :mod ( large || Size ) ) ) :order-item ( coke || DrinkItem ) ) )"
    g = delinearize(line_to_tokens(text)).graph
    assert g.nodes["v1"].type_name == "OrderIntent"
    assert g.nodes["v2"].type_name == "Burger"
    assert g.nodes["v3"].type_name == "Size"
    assert g.nodes["v4"].type_name == "DrinkItem"


def test_roundtrip_refer_free(random_graphs):
    for g in random_graphs:
        result = delinearize(linearize(g), turn=g.turn)
        assert not result.is_fallback, result.diagnostics
        assert smatch(result.graph, strip_vars(g)).f1 == 1


def test_fuzz_totality():
    vocab = [
        "(", ")", ":order-item", ":mod", ":op1", ":op2", ":polarity", ":refer",
        "OrderIntent", "burger", "||", "Burger", "and", "reference", "-",
        "large", "Size",
    ]
    rng = random.Random(7)
    for _ in range(2000):
        seq = [rng.choice(vocab) for _ in range(rng.randint(0, 25))]
        result = delinearize(seq, turn=2)
        assert isinstance(result, DelinearizeResult)
        if result.is_fallback:
            assert result.graph.nodes["v1"].type_name == FALLBACK_INTENT
        else:
            assert result.graph.root in result.graph.nodes


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(
    ["(", ")", ":mod", ":op1", "Burger", "||", "and", "reference", "-", "x y"]
), max_size=20))
def test_fuzz_totality_hypothesis(tokens):
    result = delinearize(tokens)
    assert result.graph is not None


def test_fallback_graph_shape():
    g = fallback_graph(4)
    assert g.turn == 4
    assert g.nodes["v1"].type_name == FALLBACK_INTENT
