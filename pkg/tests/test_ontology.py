import random

import pytest
from hypothesis import given, settings, strategies as st

from dmrkit.ontology import (
    BUILTINS,
    FALLBACK_INTENT,
    OntologyError,
    parse_ontology,
)

FASTFOOD_SNIPPET = """
Intent <- OrderIntent | PaymentIntent | ThankYouIntent
Entity <- FoodItem | DrinkItem
FoodItem <- Pizza | Burger | Sandwich
"""


def test_parse_hierarchy():
    o = parse_ontology(FASTFOOD_SNIPPET)
    assert {"OrderIntent", "PaymentIntent", "ThankYouIntent"} <= o.intents
    assert {"FoodItem", "DrinkItem", "Pizza", "Burger", "Sandwich"} <= o.entities
    assert o.types["Pizza"].parent == "FoodItem"
    assert o.types["FoodItem"].parent == "Entity"


def test_empty_input_has_roots_and_builtins():
    o = parse_ontology("")
    assert set(o.types) == {"Intent", "Entity", FALLBACK_INTENT}
    assert o.builtins == BUILTINS


def test_reparenting_root_is_rejected():
    with pytest.raises(OntologyError, match=r"cycle/root violation at line 1"):
        parse_ontology("Pizza <- Intent")


def test_cycle_detection_with_line_number():
    text = "Entity <- A\nA <- B\nB <- A"
    with pytest.raises(OntologyError, match=r"line 3"):
        parse_ontology(text)


def test_duplicate_child():
    with pytest.raises(OntologyError, match="duplicate"):
        parse_ontology("Intent <- A\nEntity <- A")


def test_unknown_parent_reported():
    with pytest.raises(OntologyError, match="unknown parent"):
        parse_ontology("Mystery <- Widget")


def test_unknown_argument_target():
    with pytest.raises(OntologyError, match="unknown target"):
        parse_ontology("Intent <- OrderIntent\nOrderIntent.order-item -> Widget")


def test_comments_and_blank_lines():
    o = parse_ontology("# header\n\nIntent <- OrderIntent  # trailing\n")
    assert "OrderIntent" in o.intents


def test_resolve_arguments_inheritance():
    text = FASTFOOD_SNIPPET + (
        "Entity.mod -> Size\nEntity.quant -> Quantity\n"
        "FoodItem.ingredient -> Ingredient\n"
        "Entity <- Size | Quantity | Ingredient\n"
    )
    o = parse_ontology(text)
    args = o.resolve_arguments("Pizza")
    assert set(args) == {"mod", "quant", "ingredient", "polarity"}
    assert args["mod"].allowed_targets == frozenset({"Size"})


def test_entity_defaults_without_domain_lines():
    o = parse_ontology("")
    assert set(o.resolve_arguments("Entity")) == {"mod", "quant", "polarity"}
    assert o.resolve_arguments("Entity")["polarity"].allows_keyword == "-"


def test_child_override_wins():
    text = (
        "Entity <- FoodItem | Size | Topping\n"
        "FoodItem <- Pizza\n"
        "Entity.mod -> Size\n"
        "Pizza.mod -> Topping\n"
    )
    o = parse_ontology(text)
    assert o.resolve_arguments("FoodItem")["mod"].allowed_targets == {"Size"}
    assert o.resolve_arguments("Pizza")["mod"].allowed_targets == {"Topping"}


def test_is_subtype():
    o = parse_ontology(FASTFOOD_SNIPPET)
    assert o.is_subtype("Pizza", "FoodItem")
    assert o.is_subtype("Pizza", "Pizza")
    assert not o.is_subtype("Pizza", "DrinkItem")
    assert o.is_subtype("Pizza", "Entity")
    with pytest.raises(OntologyError):
        o.is_subtype("Pizza", "Nope")


def test_reference_arguments_extend_entity():
    o = parse_ontology(FASTFOOD_SNIPPET + "Entity.mod -> FoodItem\n")
    args = o.resolve_arguments("reference")
    assert "refer" in args and "mod" in args and "polarity" in args


def test_render_parse_fixed_point():
    text = FASTFOOD_SNIPPET + (
        "Entity <- Size\nEntity.mod -> Size\nFoodItem.ingredient -> Size\n"
    )
    o1 = parse_ontology(text)
    o2 = parse_ontology(o1.render())
    assert o1 == o2
    assert o2.render() == o1.render()


# -- property tests ---------------------------------------------------------


def _random_forest_text(seed: int, n_types: int) -> str:
    rng = random.Random(seed)
    names = [f"T{i}" for i in range(n_types)]
    parents = {}
    roots = ["Intent", "Entity"]
    for i, name in enumerate(names):
        parents[name] = rng.choice(roots + names[:i])
    lines = {}
    for child, parent in parents.items():
        lines.setdefault(parent, []).append(child)
    return "\n".join(
        f"{parent} <- " + " | ".join(kids) for parent, kids in lines.items()
    )


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n_types=st.integers(1, 50))
def test_subtype_partial_order(seed, n_types):
    o = parse_ontology(_random_forest_text(seed, n_types))
    names = sorted(o.types)
    rng = random.Random(seed)
    sample = rng.sample(names, min(8, len(names)))
    for a in sample:
        assert o.is_subtype(a, a)
        for b in sample:
            if o.is_subtype(a, b) and o.is_subtype(b, a):
                assert a == b
            for c in sample:
                if o.is_subtype(a, b) and o.is_subtype(b, c):
                    assert o.is_subtype(a, c)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n_types=st.integers(1, 50))
def test_child_arguments_superset_of_parent(seed, n_types):
    o = parse_ontology(_random_forest_text(seed, n_types))
    for name, decl in o.types.items():
        if decl.parent is None:
            continue
        parent_args = o.resolve_arguments(decl.parent)
        child_args = o.resolve_arguments(name)
        for label, spec in parent_args.items():
            assert label in child_args
            if label not in decl.own_args:
                assert child_args[label] == spec


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n_types=st.integers(1, 40))
def test_render_roundtrip_random_forests(seed, n_types):
    o1 = parse_ontology(_random_forest_text(seed, n_types))
    assert parse_ontology(o1.render()) == o1
