"""Synthetic fixtures: ontology-valid random graphs, a coreference
benchmark corpus with seeded referent patterns, and word vectors.

The benchmark is built so the three resolvers separate: referents mostly
live *before* the latest candidate-bearing turn (hurting the recency
rule), and a controlled share of queries reuse a food word mentioned in
two different turns with only the most recent mention as gold (solvable
with dialogue structure, not with local lexical features alone).
"""

from __future__ import annotations

import random
from importlib import resources

import numpy as np

from .corpus import Corpus, Dialogue, Turn
from .graph import DmrGraph, Edge, Node, NodeKind, ReferTarget
from .ontology import (
    EDGE_POLARITY,
    INTENT_ROOT,
    KEYWORD_NEG,
    OP_AND,
    OP_REFERENCE,
    ArgSpec,
    Ontology,
    parse_ontology,
)
from .wordvec import WordVectors


def fastfood_ontology() -> Ontology:
    text = resources.files("dmrkit.data").joinpath("fastfood.dmr-ont").read_text("utf-8")
    return parse_ontology(text)


# --------------------------------------------------------------------------
# Random ontology-valid graphs
# --------------------------------------------------------------------------

_LEX_WORDS = [
    "margherita", "pepperoni", "hawaiian", "veggie", "cheeseburger",
    "hamburger", "club", "panini", "coke", "sprite", "latte", "lemonade",
    "small", "medium", "large", "one", "two", "three", "extra", "cheese",
    "olives", "bacon", "card", "cash", "green", "stripe",
]


class _GraphSampler:
    def __init__(self, ontology: Ontology, rng: random.Random, max_nodes: int,
                 turn: int, allow_refs: bool):
        self.o = ontology
        self.rng = rng
        self.turn = turn
        self.allow_refs = allow_refs and turn > 0
        self.budget = rng.randint(1, max_nodes)
        self.nodes: dict[str, Node] = {}
        self.edges: list[Edge] = []
        self._counter = 0
        self.intents = sorted(self.o.intents - {INTENT_ROOT})
        self._concrete: dict[frozenset, list[str]] = {}

    def _new_node(self, kind: NodeKind, type_name: str, lex=None, canon=None) -> str:
        self._counter += 1
        var = f"v{self._counter}"
        self.nodes[var] = Node(var, kind, type_name, lex, canon)
        self.budget -= 1
        return var

    def _concrete_targets(self, spec: ArgSpec) -> list[str]:
        key = spec.allowed_targets
        if key not in self._concrete:
            self._concrete[key] = sorted(
                t for t in self.o.types if self.o.admits_type(spec, t)
            )
        return self._concrete[key]

    def _lexical(self) -> str:
        words = self.rng.randint(1, 2)
        return " ".join(self.rng.choice(_LEX_WORDS) for _ in range(words))

    def sample(self) -> DmrGraph:
        if self.budget >= 3 and self.rng.random() < 0.15:
            root = self._new_node(NodeKind.OPERATOR, OP_AND)
            n_children = min(self.rng.randint(2, 3), self.budget)
            for i in range(1, n_children + 1):
                self.edges.append(Edge(root, f"op{i}", self._intent()))
        else:
            root = self._intent()
        return DmrGraph(self.turn, root, self.nodes, tuple(self.edges))

    def _intent(self) -> str:
        type_name = self.rng.choice(self.intents)
        var = self._new_node(NodeKind.INTENT, type_name)
        self._attach_args(var, type_name)
        return var

    def _attach_args(self, var: str, type_name: str) -> None:
        for label, spec in sorted(self.o.resolve_arguments(type_name).items()):
            if self.budget <= 0:
                return
            if self.rng.random() > 0.45:
                continue
            target = self._target(spec)
            if target is not None:
                self.edges.append(Edge(var, label, target))

    def _target(self, spec: ArgSpec) -> str | None:
        if spec.allows_keyword and not spec.allowed_targets:
            return spec.allows_keyword
        choices = self._concrete_targets(spec)
        if not choices or self.budget <= 0:
            return None
        if self.budget >= 3 and self.rng.random() < 0.2:
            var = self._new_node(NodeKind.OPERATOR, OP_AND)
            n_children = min(self.rng.randint(2, 3), self.budget)
            ok = 0
            for _ in range(n_children):
                child = self._entity_or_ref(spec, choices)
                if child is not None:
                    ok += 1
                    self.edges.append(Edge(var, f"op{ok}", child))
            if ok >= 1:
                return var
            del self.nodes[var]  # budget starved; drop the empty conjunction
            return None
        return self._entity_or_ref(spec, choices)

    def _entity_or_ref(self, spec: ArgSpec, choices: list[str]) -> str | None:
        if self.budget <= 0:
            return None
        if self.allow_refs and self.rng.random() < 0.15 and any(
            t in self.o.entities for t in choices
        ):
            var = self._new_node(
                NodeKind.OPERATOR, OP_REFERENCE,
                lex=("the " + self.rng.choice(_LEX_WORDS))
                if self.rng.random() < 0.7 else None,
            )
            for _ in range(1 if self.rng.random() < 0.9 else 2):
                target_turn = self.rng.randrange(self.turn)
                target_var = f"v{self.rng.randint(1, 6)}"
                edge = Edge(var, "refer", ReferTarget(target_turn, target_var))
                if edge not in self.edges:
                    self.edges.append(edge)
            return var
        type_name = self.rng.choice([t for t in choices if t in self.o.entities] or choices)
        lex = self._lexical() if self.rng.random() < 0.75 else None
        canon = self._lexical() if lex and self.rng.random() < 0.05 else None
        var = self._new_node(NodeKind.ENTITY, type_name, lex, canon)
        self._attach_args(var, type_name)
        return var


def random_valid_graph(
    ontology: Ontology,
    rng: random.Random,
    max_nodes: int = 12,
    turn: int = 0,
    allow_refs: bool = False,
) -> DmrGraph:
    """A random tree satisfying every ontology constraint, so
    ``validate(ontology, g)`` is empty by construction."""
    return _GraphSampler(ontology, rng, max_nodes, turn, allow_refs).sample()


# --------------------------------------------------------------------------
# Synthetic coreference benchmark
# --------------------------------------------------------------------------

_MENU = {
    "margherita": "Pizza", "pepperoni": "Pizza", "hawaiian": "Pizza",
    "veggie": "Pizza", "cheeseburger": "Burger", "hamburger": "Burger",
    "whopper": "Burger", "club": "Sandwich", "panini": "Sandwich",
    "blt": "Sandwich", "coke": "DrinkItem", "sprite": "DrinkItem",
    "latte": "DrinkItem", "lemonade": "DrinkItem",
}
_SIZES = ["small", "medium", "large"]
_QUANTS = ["one", "two", "three"]
_AGENT_LINES = [
    "sure thing", "got it , anything else ?", "okay , coming right up",
    "alright , added to your order",
]


def benchmark_word_vectors(dimension: int = 100, seed: int = 7) -> WordVectors:
    """Deterministic random vectors for every token the benchmark emits.

    Entries are nonnegative so token identity survives several LeakyReLU
    rounds during graph encoding; distinct tokens stay near-orthogonal.
    """
    vocab = sorted(
        set(_MENU) | set(_SIZES) | set(_QUANTS)
        | {"the", "reference", "and", "extra", "cheese", "make", "cancel"}
    )
    rng = np.random.default_rng(seed)
    vectors = {}
    for tok in vocab:
        vec = np.zeros(dimension)
        support = rng.choice(dimension, size=8, replace=False)
        vec[support] = np.abs(rng.normal(0.0, 1.0, size=8))
        vectors[tok] = vec / np.linalg.norm(vec)
    return WordVectors(vectors, dimension)


class _DialogueSynth:
    """Generates one dialogue: several ordering turns, then one or two
    referring turns whose reference resolves to a seeded earlier item."""

    def __init__(self, rng: random.Random, did: str, ambiguous_share: float = 0.45):
        self.rng = rng
        self.did = did
        self.ambiguous_share = ambiguous_share
        self.turns: list[Turn] = []
        self.mentions: list[tuple[int, str, str]] = []  # (turn, var, word)

    def _add_agent(self) -> None:
        self.turns.append(
            Turn(len(self.turns), "agent", self.rng.choice(_AGENT_LINES))
        )

    def _order_turn(self, words: list[str]) -> None:
        index = len(self.turns)
        counter = [0]

        def new_var() -> str:
            counter[0] += 1
            return f"v{counter[0]}"

        nodes: dict[str, Node] = {}
        edges: list[Edge] = []
        root = new_var()
        nodes[root] = Node(root, NodeKind.INTENT, "OrderIntent")

        def item(word: str) -> str:
            var = new_var()
            nodes[var] = Node(var, NodeKind.ENTITY, _MENU[word], word)
            self.mentions.append((index, var, word))
            if self.rng.random() < 0.3:
                q = new_var()
                nodes[q] = Node(q, NodeKind.ENTITY, "Quantity", self.rng.choice(_QUANTS))
                edges.append(Edge(var, "quant", q))
            if self.rng.random() < 0.2:
                m = new_var()
                nodes[m] = Node(m, NodeKind.ENTITY, "Size", self.rng.choice(_SIZES))
                edges.append(Edge(var, "mod", m))
            return var

        if len(words) == 1:
            edges.insert(0, Edge(root, "order-item", item(words[0])))
        else:
            conj = new_var()
            nodes[conj] = Node(conj, NodeKind.OPERATOR, OP_AND)
            edges.insert(0, Edge(root, "order-item", conj))
            for i, w in enumerate(words, start=1):
                edges.append(Edge(conj, f"op{i}", item(w)))
        text = "i would like " + " and ".join(
            f"{self.rng.choice(_QUANTS)} {w}" for w in words
        )
        graph = DmrGraph(index, root, nodes, tuple(edges))
        self.turns.append(Turn(index, "customer", text, graph, None))
        self._add_agent()

    def _referring_turn(self, word: str, gold: tuple[int, str], negate: bool) -> None:
        index = len(self.turns)
        nodes = {
            "v1": Node("v1", NodeKind.INTENT, "OrderIntent"),
            "v2": Node("v2", NodeKind.OPERATOR, OP_REFERENCE, f"the {word}"),
        }
        edges = [
            Edge("v1", "order-item", "v2"),
            Edge("v2", "refer", ReferTarget(gold[0], gold[1])),
        ]
        if negate:
            edges.append(Edge("v2", EDGE_POLARITY, KEYWORD_NEG))
            text = f"cancel the {word}"
        else:
            nodes["v3"] = Node("v3", NodeKind.ENTITY, "Size", self.rng.choice(_SIZES))
            edges.append(Edge("v2", "mod", "v3"))
            text = f"make the {word} {nodes['v3'].lexical_value}"
        graph = DmrGraph(index, "v1", nodes, tuple(edges))
        self.turns.append(Turn(index, "customer", text, graph, None))
        self._add_agent()

    def _latest_mention(self, word: str) -> tuple[int, str]:
        return max(
            ((t, v) for (t, v, w) in self.mentions if w == word),
            key=lambda tv: tv[0],
        )

    def build(self, single_candidate: bool) -> Dialogue:
        rng = self.rng
        if single_candidate:
            # One single-item turn, then the reference: one candidate only.
            self._order_turn([rng.choice(sorted(_MENU))])
            turn, var, word = self.mentions[0]
            self._referring_turn(word, (turn, var), rng.random() < 0.25)
            return Dialogue(self.did, self.turns)

        n_orders = rng.randint(4, 5)
        pool = rng.sample(sorted(_MENU), n_orders + 5)
        plans = [
            [pool.pop()] if rng.random() < 0.65 else [pool.pop(), pool.pop()]
            for _ in range(n_orders)
        ]
        if rng.random() < self.ambiguous_share:
            # Ambiguous query: the word is ordered twice. Only the later
            # mention is gold, placed within two DMR hops of the
            # referring turn; the early duplicate sits three or more
            # hops back, beyond what local features can set apart.
            qword = plans[0][0]
            gold_pos = n_orders - 1 if rng.random() < 0.25 else n_orders - 2
            # Keep the re-mention turn's item count distribution identical
            # to every other turn so no local structure gives it away.
            plans[gold_pos] = [qword] + plans[gold_pos][1:]
        else:
            # Unambiguous query, biased away from the latest ordering
            # turn so the recency rule stays unreliable.
            qpos = (
                n_orders - 1
                if rng.random() < 0.3
                else rng.randrange(0, n_orders - 1)
            )
            qword = plans[qpos][0]
        for picks in plans:
            self._order_turn(picks)
        queried = {qword}
        self._referring_turn(qword, self._latest_mention(qword), rng.random() < 0.15)

        if rng.random() < 0.75:
            # Second reference, resolvable and near: its word was last
            # ordered in the final ordering turn (two hops back once the
            # first referring turn sits in between).
            last_turn = max(t for (t, _, _) in self.mentions)
            nearby = sorted(
                w for (t, _, w) in self.mentions
                if t == last_turn and w not in queried
                and self._latest_mention(w)[0] == t
            )
            if nearby:
                word2 = rng.choice(nearby)
                queried.add(word2)
                self._referring_turn(
                    word2, self._latest_mention(word2), rng.random() < 0.15
                )
        if rng.random() < 0.35:
            # Third reference: any unambiguous word, whatever its distance
            # (word identity alone resolves it).
            words = {w for (_, _, w) in self.mentions}
            unique = sorted(
                w for w in words - queried
                if sum(1 for (_, _, x) in self.mentions if x == w) == 1
            )
            if unique:
                word3 = rng.choice(unique)
                self._referring_turn(
                    word3, self._latest_mention(word3), rng.random() < 0.15
                )
        return Dialogue(self.did, self.turns)


def synthetic_coref_corpus(
    n_train: int = 200, n_dev: int = 40, n_test: int = 80, seed: int = 0
) -> Corpus:
    """Benchmark corpus with seeded coreference patterns.

    Roughly a quarter of the queries have a single candidate (they are
    excluded from scoring, mirroring the evaluation protocol); the rest
    mix unambiguous and ambiguous referent words.
    """
    rng = random.Random(seed)
    splits: dict[str, list[Dialogue]] = {}
    for split, count in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        dialogues = []
        for i in range(count):
            synth = _DialogueSynth(rng, f"{split}-{i}")
            dialogues.append(synth.build(single_candidate=rng.random() < 0.3))
        splits[split] = dialogues
    return Corpus(splits)
