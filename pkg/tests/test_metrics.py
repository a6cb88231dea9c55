import random
from fractions import Fraction

import pytest

from dmrkit.graph import read_graph, write_graph
from dmrkit.linearizer import delinearize, line_to_tokens
from dmrkit.metrics import (
    MatchConfig,
    coref_accuracy,
    corpus_eval,
    depth_bucket,
    exact_match,
    length_bucket,
    node_bucket,
    smatch,
)
from dmrkit.synth import random_valid_graph


def test_identity_score():
    g = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    score = smatch(g, g)
    assert score.precision == score.recall == score.f1 == 1


def test_one_type_substitution_is_point_eight():
    gold = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    pred = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Pizza))")
    score = smatch(pred, gold, force_method="oracle")
    assert score.matched == 4
    assert score.f1 == Fraction(4, 5)


def test_single_node_mismatch_is_half():
    a = read_graph("(v1 / ThankYouIntent)")
    b = read_graph("(v1 / PaymentIntent)")
    score = smatch(a, b, force_method="oracle")
    assert score.matched == 1  # the top triple still aligns
    assert score.f1 == Fraction(1, 2)


def test_renaming_invariance():
    a = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    b = read_graph("(v7 / OrderIntent :order-item (v3 / burger || Burger))")
    assert smatch(a, b).f1 == 1
    assert exact_match(a, b)


def test_edge_order_permutation_matches():
    a = read_graph(
        "(v1 / OrderIntent :order-item (v2 / burger || Burger) "
        ":order-item (v3 / coke || DrinkItem))"
    )
    b = read_graph(
        "(v1 / OrderIntent :order-item (v2 / coke || DrinkItem) "
        ":order-item (v3 / burger || Burger))"
    )
    assert exact_match(a, b)


def test_lex_difference_breaks_exact_match():
    a = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    b = read_graph("(v1 / OrderIntent :order-item (v2 / hamburger || Burger))")
    assert not exact_match(a, b)


def test_f1_symmetry(random_graphs):
    rng = random.Random(5)
    for _ in range(30):
        a, b = rng.sample(random_graphs, 2)
        ab = smatch(a, b)
        ba = smatch(b, a)
        assert ab.f1 == ba.f1
        assert ab.precision == ba.recall and ab.recall == ba.precision


def test_hillclimb_never_exceeds_oracle(fastfood):
    rng = random.Random(11)
    agree = 0
    total = 60
    for _ in range(total):
        a = random_valid_graph(fastfood, rng, max_nodes=7)
        b = random_valid_graph(fastfood, rng, max_nodes=7)
        cfg = MatchConfig(restarts=4, seed=3)
        oracle = smatch(a, b, cfg, force_method="oracle")
        climb = smatch(a, b, cfg, force_method="hillclimb")
        assert climb.matched <= oracle.matched
        agree += climb.matched == oracle.matched
    assert agree >= total * 0.95


def test_mapping_is_injective(random_graphs):
    rng = random.Random(2)
    for _ in range(20):
        a, b = rng.sample(random_graphs, 2)
        score = smatch(a, b)
        values = list(score.mapping.values())
        assert len(values) == len(set(values))
        assert score.matched <= min(score.pred_triples, score.gold_triples)


def test_seed_determinism(fastfood):
    rng = random.Random(4)
    a = random_valid_graph(fastfood, rng, max_nodes=12)
    b = random_valid_graph(fastfood, rng, max_nodes=12)
    cfg = MatchConfig(restarts=4, seed=9)
    s1 = smatch(a, b, cfg, force_method="hillclimb")
    s2 = smatch(a, b, cfg, force_method="hillclimb")
    assert s1.matched == s2.matched and s1.mapping == s2.mapping


def test_restarts_validation():
    with pytest.raises(ValueError):
        MatchConfig(restarts=0)


# -- coref accuracy ----------------------------------------------------------


def test_coref_accuracy_perfect():
    golds = [{(0, "v1")}, {(1, "v2")}]
    assert coref_accuracy(golds, golds) == 1


def test_coref_accuracy_single_candidate_exclusion():
    golds = [{(0, "v1")}] * 6
    preds = [{(0, "v1")}, {(0, "v9")}, {(0, "v9")}, {(0, "v9")}, {(0, "v1")}, {(0, "v1")}]
    counts = [3, 3, 3, 3, 1, 1]
    # 4 multi-candidate items, 1 correct; the 2 single-candidate ones drop.
    assert coref_accuracy(golds, preds, True, counts) == Fraction(1, 4)


def test_coref_accuracy_empty_prediction_is_wrong():
    assert coref_accuracy([{(0, "v1")}], [set()]) == 0


def test_coref_accuracy_empty_multiset_warns():
    with pytest.warns(UserWarning):
        value = coref_accuracy([{(0, "v1")}], [{(0, "v1")}], True, [1])
    assert value == 0


def test_coref_accuracy_length_mismatch():
    with pytest.raises(ValueError):
        coref_accuracy([set()], [])


# -- corpus eval -------------------------------------------------------------


def test_buckets():
    assert [depth_bucket(d) for d in (1, 2, 3, 4, 9)] == ["1", "2", "3", "4+", "4+"]
    assert [node_bucket(n) for n in (1, 2, 3, 5, 7, 20)] == [
        "1-2", "1-2", "3-4", "5-6", "7+", "7+",
    ]
    assert [length_bucket(n) for n in (1, 5, 6, 11, 16, 40)] == [
        "1-5", "1-5", "6-10", "11-15", "16+", "16+",
    ]


def test_corpus_eval_all_correct(fastfood):
    g = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    report = corpus_eval([(g, g, "two burgers please")], fastfood)
    assert report.exact_match_rate == 1.0
    assert all(v == 0.0 for v in report.error_portions.values())


def test_corpus_eval_counts_sum(fastfood, random_graphs):
    pairs = [(g, g, "hello there") for g in random_graphs[:40]]
    report = corpus_eval(pairs, fastfood)
    assert sum(cell["total"] for cell in report.by_depth.values()) == 40
    assert sum(cell["total"] for cell in report.by_node_count.values()) == 40


def test_corpus_eval_error_portions(fastfood):
    gold = read_graph(
        "(v1 / OrderIntent :order-item (v2 / burger || Burger "
        ":quant (v3 / 2 || Quantity)))"
    )
    pred_drop_quant = read_graph("(v1 / OrderIntent :order-item (v2 / burger || Burger))")
    pred_fallback = delinearize(line_to_tokens(") ("), turn=0)
    pred_wrong_intent = read_graph("(v1 / PaymentIntent)")
    report = corpus_eval(
        [
            (gold, gold, "two burgers"),
            (gold, pred_drop_quant, "two burgers"),
            (gold, pred_fallback, "two burgers"),
            (gold, pred_wrong_intent, "two burgers"),
        ],
        fastfood,
    )
    assert report.exact_matches == 1
    assert report.error_portions["invalid_graph"] == pytest.approx(1 / 3)
    assert report.error_portions["compositional_error"] == pytest.approx(1.0)
    # fallback and PaymentIntent predictions change the intent set
    assert report.error_portions["wrong_intent"] == pytest.approx(2 / 3)
