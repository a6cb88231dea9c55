"""Multi-turn dialogue graph for coreference resolution.

All context DMRs are joined into one typed multigraph: every DMR node
links to a per-turn global turn node, turn nodes chain to their k-hop
ancestors, previously resolved references link to their referents, and
every edge gets an inverse so messages pass both ways.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .graph import DmrGraph, NodeKind, ReferTarget
from .ontology import OP_AND, OP_OR, OP_REFERENCE

_OP_LABEL_RE = re.compile(r"^op([1-9][0-9]*)$")

TURN_EDGE = "turn-edge"
REFER_EDGE = "refer"
INV_PREFIX = "inv-"


def hop_edge(k: int) -> str:
    return f"{k}-hop"


@dataclass(frozen=True)
class DGraphConfig:
    k_max: int = 2
    use_turn_nodes: bool = True  # False: chain consecutive DMR roots instead
    link_resolved_refs: bool = True

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")


@dataclass(frozen=True)
class DGNode:
    id: int
    kind: str  # "dmr" | "keyword" | "turn"
    turn: int
    variable: str | None
    payload: str
    node_kind: NodeKind | None = None  # for dmr nodes


@dataclass(frozen=True)
class CorefQuery:
    """One reference node to resolve, with its rule-derived candidates."""

    turn: int
    variable: str
    candidates: tuple[tuple[int, str], ...]
    gold: frozenset[tuple[int, str]] | None = None

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidates must be nonempty")
        if any(t >= self.turn for t, _ in self.candidates):
            raise ValueError("candidates must precede the referring turn")


@dataclass
class DialogueGraph:
    nodes: list[DGNode]
    edges: list[tuple[int, str, int]]
    origin: dict[tuple[int, str], int]  # (turn, variable) -> node id
    turn_nodes: dict[int, int]  # turn -> turn node id

    @property
    def relations(self) -> list[str]:
        return sorted({r for _, r, _ in self.edges})

    def undirected_adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        for s, _, t in self.edges:
            adj[s].add(t)
            adj[t].add(s)
        return adj


def effective_incoming_labels(g: DmrGraph, var: str) -> frozenset[str]:
    """Incoming edge labels with conjunction transparency: an ``opN``
    edge contributes the conjunction node's own incoming labels, so an
    item inside an ``and`` under ``order-item`` counts as order-item."""
    labels: set[str] = set()

    def walk(v: str, seen: frozenset[str]) -> None:
        for e in g.edges:
            if e.target != v:
                continue
            if (
                _OP_LABEL_RE.match(e.label)
                and g.nodes[e.source].type_name in (OP_AND, OP_OR)
                and e.source not in seen
            ):
                walk(e.source, seen | {e.source})
            else:
                labels.add(e.label)

    walk(var, frozenset())
    return frozenset(labels)


def candidates(
    dmrs: list[DmrGraph], ref_edge_labels: frozenset[str] | set[str]
) -> list[tuple[int, str]]:
    """Context nodes sharing every incoming label of the reference node,
    ordered by (turn, DFS index); reference nodes are never candidates."""
    ref_edge_labels = frozenset(ref_edge_labels)
    out: list[tuple[int, str]] = []
    if not ref_edge_labels:
        return out
    for g in dmrs:
        for var in g.preorder():
            node = g.nodes[var]
            if node.type_name == OP_REFERENCE:
                continue
            if ref_edge_labels <= effective_incoming_labels(g, var):
                out.append((g.turn, var))
    return out


def gold_resolutions(
    dmrs: list[DmrGraph],
) -> dict[tuple[int, str], frozenset[tuple[int, str]]]:
    """Referent sets embedded in the DMRs' own refer edges."""
    resolved: dict[tuple[int, str], set[tuple[int, str]]] = {}
    for g in dmrs:
        for e in g.edges:
            if isinstance(e.target, ReferTarget):
                resolved.setdefault((g.turn, e.source), set()).add(
                    (e.target.turn, e.target.variable)
                )
    return {k: frozenset(v) for k, v in resolved.items()}


def extract_queries(dmrs: list[DmrGraph]) -> list[CorefQuery]:
    """One query per reference node, in dialogue order; reference nodes
    without any rule-admissible candidate are skipped."""
    queries: list[CorefQuery] = []
    for i, g in enumerate(dmrs):
        context = dmrs[:i]
        for var in g.preorder():
            if g.nodes[var].type_name != OP_REFERENCE:
                continue
            labels = effective_incoming_labels(g, var)
            cands = candidates(context, labels)
            if not cands:
                continue
            gold = gold_resolutions([g]).get((g.turn, var))
            queries.append(CorefQuery(g.turn, var, tuple(cands), gold))
    return queries


def build_dialogue_graph(
    dmrs: list[DmrGraph],
    resolved: dict[tuple[int, str], frozenset[tuple[int, str]]] | None = None,
    cfg: DGraphConfig | None = None,
) -> DialogueGraph:
    """Connect context DMRs into one dialogue graph.

    ``resolved`` maps reference-node origins to referent sets for refer
    edges (gold during training, predictions during inference). With
    ``use_turn_nodes`` off, consecutive DMR roots are chained with 1-hop
    edges instead. Inverse edges are added for everything.
    """
    cfg = cfg or DGraphConfig()
    nodes: list[DGNode] = []
    edges: list[tuple[int, str, int]] = []
    origin: dict[tuple[int, str], int] = {}
    turn_nodes: dict[int, int] = {}

    def add_node(kind: str, turn: int, variable: str | None, payload: str,
                 node_kind: NodeKind | None = None) -> int:
        node = DGNode(len(nodes), kind, turn, variable, payload, node_kind)
        nodes.append(node)
        return node.id

    for g in dmrs:
        turn_member_ids: list[int] = []
        for var in g.preorder():
            n = g.nodes[var]
            nid = add_node("dmr", g.turn, var, n.payload(), n.kind)
            origin[(g.turn, var)] = nid
            turn_member_ids.append(nid)
        for e in g.edges:
            if isinstance(e.target, ReferTarget):
                continue  # linked through `resolved` only
            src = origin[(g.turn, e.source)]
            if e.targets_keyword:
                kw = add_node("keyword", g.turn, None, e.target)
                turn_member_ids.append(kw)
                edges.append((src, e.label, kw))
            else:
                edges.append((src, e.label, origin[(g.turn, e.target)]))
        if cfg.use_turn_nodes:
            tn = add_node("turn", g.turn, None, "")
            turn_nodes[g.turn] = tn
            for nid in turn_member_ids:
                edges.append((nid, TURN_EDGE, tn))

    if cfg.use_turn_nodes:
        for j in range(len(dmrs)):
            for k in range(1, min(cfg.k_max, j) + 1):
                edges.append(
                    (turn_nodes[dmrs[j].turn], hop_edge(k), turn_nodes[dmrs[j - k].turn])
                )
    else:
        for j in range(1, len(dmrs)):
            edges.append(
                (origin[(dmrs[j].turn, dmrs[j].root)],
                 hop_edge(1),
                 origin[(dmrs[j - 1].turn, dmrs[j - 1].root)])
            )

    if cfg.link_resolved_refs and resolved:
        for ref, referents in resolved.items():
            if ref not in origin:
                raise ValueError(f"resolved reference {ref} outside context")
            for target in referents:
                if target not in origin:
                    raise ValueError(f"resolved target {target} outside context")
                edges.append((origin[ref], REFER_EDGE, origin[target]))

    edges.extend([(t, INV_PREFIX + r, s) for s, r, t in list(edges)])
    return DialogueGraph(nodes, edges, origin, turn_nodes)


def export_dialogue_graph(
    G: DialogueGraph, queries: list[CorefQuery] = ()
) -> dict:
    """JSON-ready record with deterministic node ids."""
    by_relation: dict[str, list[list[int]]] = {}
    for s, r, t in G.edges:
        by_relation.setdefault(r, []).append([s, t])
    record = {
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind,
                "turn": n.turn,
                "var": n.variable,
                "payload": n.payload,
            }
            for n in G.nodes
        ],
        "edges": {r: by_relation[r] for r in sorted(by_relation)},
        "queries": [
            {
                "ref": G.origin[(q.turn, q.variable)],
                "candidates": [G.origin[c] for c in q.candidates],
                "gold": sorted(G.origin[t] for t in q.gold) if q.gold else [],
            }
            for q in queries
        ],
    }
    return record


def export_to_text(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
