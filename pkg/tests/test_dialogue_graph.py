import json
import random

import pytest

from dmrkit.dialogue_graph import (
    CorefQuery,
    DGraphConfig,
    build_dialogue_graph,
    candidates,
    effective_incoming_labels,
    export_dialogue_graph,
    export_to_text,
    extract_queries,
    gold_resolutions,
    hop_edge,
)
from dmrkit.graph import read_graph
from dmrkit.synth import fastfood_ontology, random_valid_graph


@pytest.fixture()
def dialogue(fastfood):
    g0 = read_graph(
        "(v1 / OrderIntent :order-item (v2 / margherita || Pizza "
        ":quant (v3 / two || Quantity)))", 0, fastfood)
    g1 = read_graph(
        "(v1 / OrderIntent :order-item (v2 / and :op1 (v3 / coke || DrinkItem) "
        ":op2 (v4 / club || Sandwich)))", 2, fastfood)
    g2 = read_graph(
        "(v1 / OrderIntent :order-item (v2 / reference || the margherita "
        ":refer (T:0 N:v2) :mod (v5 / large || Size)))", 4, fastfood)
    return [g0, g1, g2]


def test_effective_incoming_labels_sees_through_conjunctions(dialogue):
    g1 = dialogue[1]
    assert effective_incoming_labels(g1, "v3") == {"order-item"}
    assert effective_incoming_labels(g1, "v2") == {"order-item"}
    assert effective_incoming_labels(g1, "v1") == frozenset()


def test_candidates_rule(dialogue):
    cands = candidates(dialogue[:2], {"order-item"})
    assert cands == [(0, "v2"), (2, "v2"), (2, "v3"), (2, "v4")]


def test_candidates_exclude_references(dialogue):
    cands = candidates(dialogue, {"order-item"})
    assert (4, "v2") not in cands


def test_candidates_empty_context():
    assert candidates([], {"order-item"}) == []


def test_candidates_require_all_labels(fastfood):
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / coke || DrinkItem) "
        ":order-item (v3 / pie || Pizza :ingredient (v4 / cheese || Ingredient)))",
        0, fastfood)
    assert candidates([g], {"order-item", "ingredient"}) == []
    assert candidates([g], {"ingredient"}) == [(0, "v4")]


def test_extract_queries(dialogue):
    queries = extract_queries(dialogue)
    assert len(queries) == 1
    q = queries[0]
    assert (q.turn, q.variable) == (4, "v2")
    assert q.gold == {(0, "v2")}
    assert (0, "v2") in q.candidates and all(t < 4 for t, _ in q.candidates)


def test_query_invariants():
    with pytest.raises(ValueError):
        CorefQuery(3, "v1", ())
    with pytest.raises(ValueError):
        CorefQuery(3, "v1", ((3, "v2"),))


def test_turn_edges_and_connectivity(dialogue):
    G = build_dialogue_graph(dialogue, gold_resolutions(dialogue), DGraphConfig())
    turn_ids = set(G.turn_nodes.values())
    # every non-turn node has exactly one turn-edge to its own turn node
    for node in G.nodes:
        if node.id in turn_ids:
            continue
        targets = [t for s, r, t in G.edges if s == node.id and r == "turn-edge"]
        assert len(targets) == 1
        assert targets[0] == G.turn_nodes[node.turn]
    # inverse edge for every edge
    edge_set = set(G.edges)
    for s, r, t in G.edges:
        mate = (t, r[4:], s) if r.startswith("inv-") else (t, "inv-" + r, s)
        assert mate in edge_set
    assert len(G.edges) % 2 == 0


def test_khop_edge_count_formula(fastfood):
    rng = random.Random(0)
    dmrs = [random_valid_graph(fastfood, rng, max_nodes=5, turn=i) for i in range(4)]
    for k_max in (1, 2, 3):
        G = build_dialogue_graph(dmrs, None, DGraphConfig(k_max=k_max))
        hops = [e for e in G.edges if e[1].endswith("-hop") and not e[1].startswith("inv")]
        assert len(hops) == sum(min(k_max, j) for j in range(4))


def test_k_max_two_links_back_two_turns(fastfood):
    rng = random.Random(1)
    dmrs = [random_valid_graph(fastfood, rng, max_nodes=4, turn=i) for i in range(4)]
    G = build_dialogue_graph(dmrs, None, DGraphConfig(k_max=2))
    tn = G.turn_nodes
    hop_pairs = {(s, r, t) for s, r, t in G.edges if r in (hop_edge(1), hop_edge(2))}
    assert (tn[3], hop_edge(1), tn[2]) in hop_pairs
    assert (tn[3], hop_edge(2), tn[1]) in hop_pairs
    assert not any(s == tn[3] and t == tn[0] for s, _, t in hop_pairs)


def test_single_dmr_graph(dialogue):
    G = build_dialogue_graph(dialogue[:1], None, DGraphConfig())
    assert len(G.turn_nodes) == 1
    assert not any(r.endswith("-hop") for _, r, _ in G.edges)
    assert len(G.nodes) == len(dialogue[0].nodes) + 1


def test_no_turn_node_ablation(dialogue):
    G = build_dialogue_graph(dialogue, None, DGraphConfig(use_turn_nodes=False))
    assert G.turn_nodes == {}
    hops = [(s, r, t) for s, r, t in G.edges if r == hop_edge(1)]
    roots = [G.origin[(g.turn, g.root)] for g in dialogue]
    assert hops == [(roots[1], hop_edge(1), roots[0]), (roots[2], hop_edge(1), roots[1])]


def test_refer_edges_from_resolved(dialogue):
    resolved = gold_resolutions(dialogue)
    G = build_dialogue_graph(dialogue, resolved, DGraphConfig())
    refer = [(s, t) for s, r, t in G.edges if r == "refer"]
    assert refer == [(G.origin[(4, "v2")], G.origin[(0, "v2")])]
    # ablation removes them
    G2 = build_dialogue_graph(dialogue, resolved, DGraphConfig(link_resolved_refs=False))
    assert not any(r == "refer" for _, r, _ in G2.edges)


def test_resolved_outside_context_raises(dialogue):
    with pytest.raises(ValueError, match="outside context"):
        build_dialogue_graph(
            dialogue, {(4, "v2"): frozenset({(9, "v9")})}, DGraphConfig()
        )


def test_keyword_nodes_present(fastfood):
    g = read_graph(
        "(v1 / OrderIntent :order-item (v2 / burger || Burger :polarity -))", 0, fastfood
    )
    G = build_dialogue_graph([g], None, DGraphConfig())
    kinds = [n.kind for n in G.nodes]
    assert kinds.count("keyword") == 1
    kw = next(n for n in G.nodes if n.kind == "keyword")
    assert any(
        (s, r, t) == (G.origin[(0, "v2")], "polarity", kw.id) for s, r, t in G.edges
    )


def test_three_hop_reachability_adjacent_turns(fastfood):
    rng = random.Random(5)
    dmrs = [random_valid_graph(fastfood, rng, max_nodes=6, turn=i) for i in range(3)]
    G = build_dialogue_graph(dmrs, None, DGraphConfig())
    adj = G.undirected_adjacency()

    def within_steps(a, b, k):
        frontier = {a}
        for _ in range(k):
            frontier |= {n for f in frontier for n in adj[f]}
            if b in frontier:
                return True
        return b in frontier

    for j in range(2):
        left = [n.id for n in G.nodes if n.turn == dmrs[j].turn and n.kind != "turn"]
        right = [n.id for n in G.nodes if n.turn == dmrs[j + 1].turn and n.kind != "turn"]
        for a in left[:4]:
            for b in right[:4]:
                assert within_steps(a, b, 3)


def test_export_deterministic(dialogue):
    resolved = gold_resolutions(dialogue)
    G1 = build_dialogue_graph(dialogue, resolved, DGraphConfig())
    G2 = build_dialogue_graph(dialogue, resolved, DGraphConfig())
    queries = extract_queries(dialogue)
    t1 = export_to_text(export_dialogue_graph(G1, queries))
    t2 = export_to_text(export_dialogue_graph(G2, queries))
    assert t1 == t2
    record = json.loads(t1)
    assert set(record) == {"nodes", "edges", "queries"}
    rels = set(record["edges"])
    assert {"turn-edge", "1-hop", "refer"} <= rels
    assert {"inv-turn-edge", "inv-1-hop", "inv-refer"} <= rels


def test_export_single_turn_node_count(dialogue):
    G = build_dialogue_graph(dialogue[:1], None, DGraphConfig())
    record = export_dialogue_graph(G)
    assert len(record["nodes"]) == len(dialogue[0].nodes) + 1
