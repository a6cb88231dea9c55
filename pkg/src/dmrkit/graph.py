"""DMR graph data model, text serialization, and triple extraction.

A DMR is one turn's rooted DAG. The text form is PENMAN-like::

    (v1 / OrderIntent
      :order-item (v2 / reference
          :refer (T:3 N:v1)
          :mod (v3 / large || Size)))

Node payloads split on ``||``: one segment is a bare type, two are
``lexical || Type``, three are ``lexical || canonical || Type``. A first
segment that is exactly ``reference`` marks a reference node (known edge
case: an entity whose lexical value is literally "reference" collides).
Lexical values may contain spaces; a payload extends to the next edge
token or closing bracket.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .ontology import (
    EDGE_POLARITY,
    EDGE_REFER,
    KEYWORD_NEG,
    KIND_ENTITY,
    KIND_INTENT,
    OP_AND,
    OP_OR,
    OP_REFERENCE,
    Ontology,
)

_VAR_RE = re.compile(r"^v[1-9][0-9]*$")
_REFER_TURN_RE = re.compile(r"^T:(\d+)$")
_REFER_VAR_RE = re.compile(r"^N:(v[1-9][0-9]*)$")


class NodeKind(Enum):
    INTENT = "Intent"
    ENTITY = "Entity"
    OPERATOR = "Operator"
    KEYWORD = "Keyword"


class GraphError(ValueError):
    """Malformed DMR text or violated graph invariants."""


@dataclass(frozen=True)
class ReferTarget:
    """Cross-turn referent written ``T:<turn> N:<var>``."""

    turn: int
    variable: str

    def __str__(self) -> str:
        return f"T:{self.turn} N:{self.variable}"


@dataclass(frozen=True)
class Node:
    variable: str
    kind: NodeKind
    type_name: str
    lexical_value: str | None = None
    canonical_value: str | None = None

    def payload(self) -> str:
        segments = [
            s
            for s in (self.lexical_value, self.canonical_value, self.type_name)
            if s is not None
        ]
        if self.kind is NodeKind.OPERATOR and self.type_name == OP_REFERENCE:
            segments = [OP_REFERENCE] + ([self.lexical_value] if self.lexical_value else [])
        return " || ".join(segments)

    def payload_tokens(self) -> list[str]:
        """Whitespace tokens of the payload, ``||`` separators excluded."""
        return [t for t in self.payload().split() if t != "||"]


@dataclass(frozen=True)
class Edge:
    source: str
    label: str
    target: str | ReferTarget  # variable, keyword literal, or ReferTarget

    @property
    def is_refer(self) -> bool:
        return isinstance(self.target, ReferTarget)

    @property
    def targets_keyword(self) -> bool:
        return isinstance(self.target, str) and not _VAR_RE.match(self.target)


@dataclass(frozen=True)
class Triple:
    """Smatch-style triple: (relation-name, arg1, arg2)."""

    kind: str  # instance | top | lex | canon | relation | keyword-attr | refer-attr
    relation: str
    arg1: str
    arg2: str

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.relation, self.arg1, self.arg2)


def infer_kind(type_name: str, segment_count: int = 1) -> NodeKind:
    """Node kind from payload shape alone (no ontology available).

    Operators and the negation keyword have fixed names; payloads with a
    lexical/canonical segment are entities; a bare name is an intent iff
    it follows the ``*Intent`` naming convention, otherwise an entity.
    """
    if type_name in (OP_AND, OP_OR, OP_REFERENCE):
        return NodeKind.OPERATOR
    if type_name == KEYWORD_NEG:
        return NodeKind.KEYWORD
    if segment_count > 1:
        return NodeKind.ENTITY
    return NodeKind.INTENT if type_name.endswith("Intent") else NodeKind.ENTITY


def kind_from_ontology(ontology: Ontology, type_name: str) -> NodeKind | None:
    try:
        kind = ontology.kind_of(type_name)
    except Exception:
        return None
    return {
        KIND_INTENT: NodeKind.INTENT,
        KIND_ENTITY: NodeKind.ENTITY,
        "operator": NodeKind.OPERATOR,
        "keyword": NodeKind.KEYWORD,
    }[kind]


@dataclass(frozen=True)
class DmrGraph:
    """One turn's DMR. Immutable after construction; invariants checked."""

    turn: int
    root: str
    nodes: dict[str, Node]
    edges: tuple[Edge, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        self._check_invariants()

    def _check_invariants(self) -> None:
        if self.root not in self.nodes:
            raise GraphError(f"root {self.root!r} is not a node")
        for var, node in self.nodes.items():
            if not _VAR_RE.match(var):
                raise GraphError(f"bad variable {var!r}")
            if var != node.variable:
                raise GraphError(f"node keyed {var!r} carries variable {node.variable!r}")
            if node.kind is NodeKind.KEYWORD:
                raise GraphError("keyword nodes carry no variable")
        root_node = self.nodes[self.root]
        if not (
            root_node.kind is NodeKind.INTENT
            or (root_node.kind is NodeKind.OPERATOR and root_node.type_name == OP_AND)
        ):
            raise GraphError("root-kind violation: root must be an Intent or `and`")
        succ: dict[str, list[str]] = {v: [] for v in self.nodes}
        for e in self.edges:
            if e.source not in self.nodes:
                raise GraphError(f"edge source {e.source!r} undefined")
            if isinstance(e.target, ReferTarget):
                if self.nodes[e.source].type_name != OP_REFERENCE:
                    raise GraphError("refer edge from non-reference node")
                if e.target.turn >= self.turn:
                    raise GraphError(
                        f"refer target turn {e.target.turn} not before turn {self.turn}"
                    )
            elif _VAR_RE.match(e.target):
                if e.target not in self.nodes:
                    raise GraphError(f"edge target {e.target!r} undefined")
                succ[e.source].append(e.target)
            if e.label == EDGE_POLARITY and e.target != KEYWORD_NEG:
                raise GraphError("polarity edges target only the keyword '-'")
        # Reachability over all edges; acyclicity over non-refer edges.
        seen = {self.root}
        stack = [self.root]
        while stack:
            for t in succ[stack.pop()]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        unreachable = set(self.nodes) - seen
        if unreachable:
            raise GraphError(f"unreachable nodes: {sorted(unreachable)}")
        color: dict[str, int] = {}

        def visit(v: str) -> None:
            color[v] = 1
            for t in succ[v]:
                c = color.get(t, 0)
                if c == 1:
                    raise GraphError("cycle in non-refer edges")
                if c == 0:
                    visit(t)
            color[v] = 2

        visit(self.root)

    # -- convenience views -------------------------------------------------

    def out_edges(self, var: str) -> list[Edge]:
        return [e for e in self.edges if e.source == var]

    def incoming_labels(self, var: str) -> set[str]:
        return {e.label for e in self.edges if e.target == var}

    def reference_variables(self) -> list[str]:
        return [
            v
            for v, n in self.nodes.items()
            if n.kind is NodeKind.OPERATOR and n.type_name == OP_REFERENCE
        ]

    def preorder(self) -> list[str]:
        """Variables in DFS preorder, children in edge insertion order."""
        order: list[str] = []
        seen: set[str] = set()

        def visit(v: str) -> None:
            if v in seen:
                return
            seen.add(v)
            order.append(v)
            for e in self.out_edges(v):
                if isinstance(e.target, str) and e.target in self.nodes:
                    visit(e.target)

        visit(self.root)
        return order

    def depth(self) -> int:
        """Node levels along the longest root-to-leaf path (single node = 1).

        Keyword targets do not add a level, matching the node count rule.
        """
        memo: dict[str, int] = {}

        def level(v: str, trail: frozenset[str]) -> int:
            if v in memo:
                return memo[v]
            kids = [
                e.target
                for e in self.out_edges(v)
                if isinstance(e.target, str) and e.target in self.nodes and e.target not in trail
            ]
            d = 1 + max((level(k, trail | {v}) for k in kids), default=0)
            memo[v] = d
            return d

        return level(self.root, frozenset())

    def node_count(self) -> int:
        """Variable-bearing nodes (keywords excluded by construction)."""
        return len(self.nodes)


# --------------------------------------------------------------------------
# Reading
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def _tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _split_payload(words: list[str]) -> list[str]:
    segments: list[list[str]] = [[]]
    for w in words:
        if w == "||":
            segments.append([])
        else:
            segments[-1].append(w)
    return [" ".join(s) for s in segments]


def node_from_payload(
    variable: str, segments: list[str], ontology: Ontology | None = None
) -> Node:
    """Build a node from ``||``-separated payload segments."""
    if not segments or not segments[0]:
        raise GraphError("empty node payload")
    if segments[0] == OP_REFERENCE:
        lex = " || ".join(segments[1:]) if len(segments) > 1 else None
        return Node(variable, NodeKind.OPERATOR, OP_REFERENCE, lexical_value=lex or None)
    if len(segments) == 1:
        type_name = segments[0]
        lex = canon = None
    elif len(segments) == 2:
        lex, type_name = segments
        canon = None
    elif len(segments) == 3:
        lex, canon, type_name = segments
    else:
        raise GraphError(f"payload has {len(segments)} segments: {segments!r}")
    kind = None
    if ontology is not None:
        kind = kind_from_ontology(ontology, type_name)
    if kind is None:
        kind = infer_kind(type_name, len(segments))
    return Node(
        variable, kind, type_name, lexical_value=lex or None, canonical_value=canon or None
    )


class _Reader:
    """Strict recursive-descent reader; repair lives in the linearizer."""

    def __init__(self, tokens: list[str], turn: int, ontology: Ontology | None):
        self.tokens = tokens
        self.pos = 0
        self.turn = turn
        self.ontology = ontology
        self.nodes: dict[str, Node] = {}
        self.edges: list[Edge] = []
        self.pending_targets: list[str] = []

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise GraphError("unbalanced brackets: unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.take()
        if got != tok:
            raise GraphError(f"expected {tok!r}, got {got!r}")

    def parse_node(self) -> str:
        self.expect("(")
        var = self.take()
        if not _VAR_RE.match(var):
            raise GraphError(f"bad variable {var!r}")
        if var in self.nodes:
            raise GraphError(f"duplicate variable {var!r}")
        self.expect("/")
        words: list[str] = []
        while True:
            tok = self.peek()
            if tok is None:
                raise GraphError("unbalanced brackets: unexpected end of input")
            if tok == ")" or tok.startswith(":"):
                break
            if tok == "(":
                raise GraphError("unexpected '(' inside payload")
            words.append(self.take())
        self.nodes[var] = node_from_payload(var, _split_payload(words), self.ontology)
        while True:
            tok = self.peek()
            if tok == ")":
                self.take()
                return var
            if tok is None:
                raise GraphError("unbalanced brackets: unexpected end of input")
            if not tok.startswith(":") or len(tok) < 2:
                raise GraphError(f"expected edge label, got {tok!r}")
            label = self.take()[1:]
            self.parse_target(var, label)

    def parse_target(self, source: str, label: str) -> None:
        tok = self.peek()
        if tok is None:
            raise GraphError("unbalanced brackets: unexpected end of input")
        if label == EDGE_REFER:
            self.expect("(")
            m_turn = _REFER_TURN_RE.match(self.take())
            m_var = _REFER_VAR_RE.match(self.take())
            if not m_turn or not m_var:
                raise GraphError("malformed refer target, expected (T:<n> N:<var>)")
            self.expect(")")
            self.edges.append(
                Edge(source, label, ReferTarget(int(m_turn.group(1)), m_var.group(1)))
            )
            return
        if tok == "(":
            child = self.parse_node()
            self.edges.append(Edge(source, label, child))
            return
        tok = self.take()
        if _VAR_RE.match(tok):
            self.edges.append(Edge(source, label, tok))
            self.pending_targets.append(tok)
        elif tok == KEYWORD_NEG:
            self.edges.append(Edge(source, label, tok))
        else:
            raise GraphError(f"bad edge target {tok!r}")

    def finish(self, root: str) -> DmrGraph:
        if self.pos != len(self.tokens):
            raise GraphError(f"trailing tokens after graph: {self.tokens[self.pos:]!r}")
        for var in self.pending_targets:
            if var not in self.nodes:
                raise GraphError(f"reentrant target {var!r} undefined")
        return DmrGraph(self.turn, root, self.nodes, tuple(self.edges))


def read_graph(text: str, turn: int = 0, ontology: Ontology | None = None) -> DmrGraph:
    """Parse DMR text into a validated graph.

    When an ontology is given it resolves node kinds authoritatively;
    otherwise kinds come from payload shape and the ``*Intent`` naming
    convention.
    """
    reader = _Reader(_tokenize(text), turn, ontology)
    root = reader.parse_node()
    return reader.finish(root)


# --------------------------------------------------------------------------
# Writing
# --------------------------------------------------------------------------


def write_graph(g: DmrGraph) -> str:
    """Serialize; edge order preserved, reentrant nodes expanded once."""
    emitted: set[str] = set()

    def emit(var: str) -> str:
        emitted.add(var)
        node = g.nodes[var]
        parts = [f"({var} / {node.payload()}"]
        for e in g.out_edges(var):
            if isinstance(e.target, ReferTarget):
                parts.append(f":{e.label} ({e.target})")
            elif e.targets_keyword:
                parts.append(f":{e.label} {e.target}")
            elif e.target in emitted:
                parts.append(f":{e.label} {e.target}")
            else:
                parts.append(f":{e.label} {emit(e.target)}")
        return " ".join(parts) + ")"

    return emit(g.root)


# --------------------------------------------------------------------------
# Triples
# --------------------------------------------------------------------------


def to_triples(g: DmrGraph, include_refer: bool = False) -> frozenset[Triple]:
    """Triple encoding used by the matcher.

    One ``instance`` triple per variable-bearing node, one ``top``
    triple, ``lex``/``canon`` attribute triples for value segments,
    ``relation`` triples for variable targets, ``keyword-attr`` for
    keyword targets, and ``refer-attr`` (target spelled ``T:<t> N:<v>``)
    only when requested.
    """
    triples = set()
    for var, node in g.nodes.items():
        triples.add(Triple("instance", "instance", var, node.type_name))
        if node.lexical_value is not None:
            triples.add(Triple("lex", "lex", var, node.lexical_value))
        if node.canonical_value is not None:
            triples.add(Triple("canon", "canon", var, node.canonical_value))
    triples.add(Triple("top", "top", g.root, "top"))
    for e in g.edges:
        if isinstance(e.target, ReferTarget):
            if include_refer:
                triples.add(Triple("refer-attr", e.label, e.source, str(e.target)))
        elif e.targets_keyword:
            triples.add(Triple("keyword-attr", e.label, e.source, e.target))
        else:
            triples.add(Triple("relation", e.label, e.source, e.target))
    return frozenset(triples)


# --------------------------------------------------------------------------
# JSON interchange
# --------------------------------------------------------------------------


def graph_to_json(g: DmrGraph) -> dict:
    def target_json(t: str | ReferTarget):
        if isinstance(t, ReferTarget):
            return {"turn": t.turn, "var": t.variable}
        return t

    return {
        "turn": g.turn,
        "root": g.root,
        "nodes": [
            {
                "var": n.variable,
                "kind": n.kind.value,
                "type": n.type_name,
                "lex": n.lexical_value,
                "canon": n.canonical_value,
            }
            for n in g.nodes.values()
        ],
        "edges": [
            {"src": e.source, "label": e.label, "target": target_json(e.target)}
            for e in g.edges
        ],
    }


def graph_from_json(record: dict) -> DmrGraph:
    nodes = {
        n["var"]: Node(
            n["var"],
            NodeKind(n["kind"]),
            n["type"],
            lexical_value=n.get("lex"),
            canonical_value=n.get("canon"),
        )
        for n in record["nodes"]
    }
    edges = []
    for e in record["edges"]:
        target = e["target"]
        if isinstance(target, dict):
            target = ReferTarget(target["turn"], target["var"])
        edges.append(Edge(e["src"], e["label"], target))
    return DmrGraph(record["turn"], record["root"], nodes, tuple(edges))
