import pytest

from dmrkit.graph import read_graph
from dmrkit.linearizer import delinearize, line_to_tokens
from dmrkit.metrics import MatchConfig
from dmrkit.validation import (
    BAD_EDGE_LABEL,
    BAD_EDGE_TARGET,
    BAD_POLARITY_HOST,
    BAD_REFER,
    BAD_ROOT,
    OP_LABEL_GAP,
    UNKNOWN_TYPE,
    classify_errors,
    intent_type_set,
    validate,
)
from dmrkit.synth import random_valid_graph


def codes(violations):
    return [v.code for v in violations]


def test_valid_graph_clean(fastfood):
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / and "
        ":op1 (v3 / coke || DrinkItem :quant (v4 / a || Quantity) :mod (v5 / large || Size)) "
        ":op2 (v6 / green stripe || Pizza :quant (v7 / two || Quantity))))"
    )
    assert validate(fastfood, g) == []


def test_unknown_type(fastfood):
    g = read_graph("(v1 / OrderIntent :order-item (v2 / thing || Widget))")
    assert codes(validate(fastfood, g)) == [UNKNOWN_TYPE]


def test_pizza_with_address_argument(fastfood):
    g = read_graph("(v1 / OrderIntent :order-item (v2 / pie || Pizza :address (v3 / here || Size)))")
    assert BAD_EDGE_LABEL in codes(validate(fastfood, g))


def test_order_item_pointing_at_quantity(fastfood):
    g = read_graph("(v1 / OrderIntent :order-item (v2 / 2 || Quantity))")
    assert codes(validate(fastfood, g)) == [BAD_EDGE_TARGET]


def test_bad_root_entity(fastfood):
    g = read_graph("(v1 / burger || Burger)", ontology=None, turn=0) if False else None
    # strict reader refuses entity roots; construct via delinearize-free path
    from dmrkit.graph import DmrGraph, Edge, Node, NodeKind

    g = DmrGraph(
        0,
        "v1",
        {"v1": Node("v1", NodeKind.INTENT, "Burger")},  # mislabeled kind on purpose
        (),
    )
    assert BAD_ROOT in codes(validate(fastfood, g))


def test_root_conjunction_of_intents_ok(fastfood):
    g = read_graph("(v1 / and :op1 (v2 / OrderIntent) :op2 (v3 / ThankYouIntent))")
    assert validate(fastfood, g) == []


def test_root_conjunction_with_entity_child(fastfood):
    g = read_graph("(v1 / and :op1 (v2 / OrderIntent) :op2 (v3 / coke || DrinkItem))")
    assert BAD_ROOT in codes(validate(fastfood, g))


def test_polarity_on_intent_flagged(fastfood):
    g = read_graph("(v1 / OrderIntent :polarity -)")
    assert codes(validate(fastfood, g)) == [BAD_POLARITY_HOST]


def test_polarity_on_entity_and_reference_ok(fastfood):
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / burger || Burger :polarity -))"
    )
    assert validate(fastfood, g) == []
    g2 = read_graph(
        "(v1 / OrderIntent :order-item (v2 / reference :refer (T:0 N:v2) :polarity -))",
        turn=2,
    )
    assert validate(fastfood, g2) == []


def test_op_label_gap(fastfood):
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / and :op1 (v3 / coke || DrinkItem) "
        ":op3 (v4 / burger || Burger)))"
    )
    assert OP_LABEL_GAP in codes(validate(fastfood, g))


def test_operator_rejects_non_op_edges(fastfood):
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / and :op1 (v3 / coke || DrinkItem) "
        ":mod (v4 / large || Size)))"
    )
    assert BAD_EDGE_LABEL in codes(validate(fastfood, g))


def test_conjunction_closure_checks_children(fastfood):
    # `and` under order-item is fine when children are order-item-compatible,
    # flagged when one child is a Quantity.
    ok = read_graph(
        "(v1 / OrderIntent :order-item (v2 / and :op1 (v3 / coke || DrinkItem) "
        ":op2 (v4 / pie || Pizza)))"
    )
    assert validate(fastfood, ok) == []
    bad = read_graph(
        "(v1 / OrderIntent :order-item (v2 / and :op1 (v3 / coke || DrinkItem) "
        ":op2 (v4 / 2 || Quantity)))"
    )
    assert BAD_EDGE_TARGET in codes(validate(fastfood, bad))


def test_reference_admissible_where_entities_are(fastfood):
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / reference :refer (T:1 N:v4)))", turn=3
    )
    assert validate(fastfood, g) == []


def test_contextual_refer_check(fastfood):
    ctx_graph = read_graph("(v1 / OrderIntent :order-item (v2 / coke || DrinkItem))", 1)
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / reference :refer (T:1 N:v2)))", turn=3
    )
    assert validate(fastfood, g, context={1: ctx_graph}) == []
    missing_var = read_graph(
        "(v1 / OrderIntent :order-item (v2 / reference :refer (T:1 N:v9)))", turn=3
    )
    assert BAD_REFER in codes(validate(fastfood, missing_var, context={1: ctx_graph}))
    missing_turn = read_graph(
        "(v1 / OrderIntent :order-item (v2 / reference :refer (T:2 N:v1)))", turn=3
    )
    assert BAD_REFER in codes(validate(fastfood, missing_turn, context={1: ctx_graph}))


def test_generator_produces_valid_graphs(fastfood, random_graphs):
    for g in random_graphs:
        assert validate(fastfood, g) == []


def test_monotone_admissible_edge(fastfood):
    import random

    from dmrkit.graph import DmrGraph, Edge, Node, NodeKind

    rng = random.Random(3)
    for _ in range(50):
        g = random_valid_graph(fastfood, rng, max_nodes=8)
        entities = [v for v, n in g.nodes.items() if n.kind is NodeKind.ENTITY]
        if not entities:
            continue
        host = rng.choice(entities)
        new_var = f"v{max(int(v[1:]) for v in g.nodes) + 1}"
        nodes = dict(g.nodes)
        nodes[new_var] = Node(new_var, NodeKind.ENTITY, "Size", "large")
        g2 = DmrGraph(g.turn, g.root, nodes, g.edges + (Edge(host, "mod", new_var),))
        assert not {BAD_ROOT, UNKNOWN_TYPE} & set(codes(validate(fastfood, g2)))


# -- classify_errors ---------------------------------------------------------


def test_identical_graphs_all_false(fastfood, random_graphs):
    for g in random_graphs[:30]:
        flags = classify_errors(fastfood, g, g)
        assert not any(flags.to_json().values())


def test_wrong_intent_set_semantics(fastfood):
    gold = read_graph(
        "(v1 / and :op1 (v2 / OrderIntent :order-item (v3 / coke || DrinkItem)) "
        ":op2 (v4 / ThankYouIntent))"
    )
    pred = read_graph("(v1 / OrderIntent :order-item (v2 / coke || DrinkItem))")
    flags = classify_errors(fastfood, gold, pred)
    assert flags.wrong_intent
    # duplicated intents of the same type do not trigger the set check
    dup = read_graph("(v1 / and :op1 (v2 / ThankYouIntent) :op2 (v3 / ThankYouIntent))")
    single = read_graph("(v1 / ThankYouIntent)")
    assert not classify_errors(fastfood, single, dup).wrong_intent


def test_compositional_error_on_dropped_quant(fastfood):
    gold = read_graph(
        "(v1 / OrderIntent :order-item (v2 / burger || Burger :quant (v3 / 2 || Quantity)))"
    )
    pred = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    flags = classify_errors(fastfood, gold, pred)
    assert flags.compositional_error
    assert not flags.wrong_intent
    assert not flags.invalid_graph


def test_compositional_not_applicable_without_order_intent(fastfood):
    gold = read_graph("(v1 / ThankYouIntent)")
    pred = read_graph("(v1 / PaymentIntent)")
    flags = classify_errors(fastfood, gold, pred)
    assert not flags.compositional_error
    assert flags.wrong_intent


def test_invalid_graph_flag_from_fallback(fastfood):
    gold = read_graph("(v1 / OrderIntent :order-item (v2 / coke || DrinkItem))")
    fallback = delinearize(line_to_tokens(") ("), turn=0)
    flags = classify_errors(fastfood, gold, fallback)
    assert flags.invalid_graph
    assert not flags.ontology_mismatch  # OutOfDomainIntent is well-typed
    assert flags.wrong_intent


def test_multiple_order_intents_packed(fastfood):
    gold = read_graph(
        "(v1 / and :op1 (v2 / OrderIntent :order-item (v3 / coke || DrinkItem)) "
        ":op2 (v4 / OrderIntent :order-item (v5 / pie || Pizza)))"
    )
    renamed = read_graph(
        "(v9 / and :op1 (v7 / OrderIntent :order-item (v2 / coke || DrinkItem)) "
        ":op2 (v1 / OrderIntent :order-item (v5 / pie || Pizza)))"
    )
    flags = classify_errors(fastfood, gold, renamed)
    assert not flags.compositional_error  # packing is renaming-invariant
    pred_dropped = read_graph(
        "(v1 / and :op1 (v2 / OrderIntent :order-item (v3 / pie || Pizza)) "
        ":op2 (v4 / ThankYouIntent))"
    )
    assert classify_errors(fastfood, gold, pred_dropped).compositional_error


def test_intent_type_set_uses_ontology(fastfood):
    g = read_graph("(v1 / OrderIntent :order-item (v2 / coke || DrinkItem))")
    assert intent_type_set(fastfood, g) == {"OrderIntent"}
