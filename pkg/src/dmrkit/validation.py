"""Ontology conformance checking and prediction error classification."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .graph import DmrGraph, Edge, Node, NodeKind, ReferTarget
from .metrics import MatchConfig, smatch
from .ontology import (
    EDGE_POLARITY,
    EDGE_REFER,
    INTENT_ROOT,
    KEYWORD_NEG,
    KIND_ENTITY,
    KIND_INTENT,
    OP_AND,
    OP_OR,
    OP_REFERENCE,
    ArgSpec,
    Ontology,
)

_OP_LABEL_RE = re.compile(r"^op([1-9][0-9]*)$")

UNKNOWN_TYPE = "unknown-type"
BAD_ROOT = "bad-root"
BAD_EDGE_LABEL = "bad-edge-label"
BAD_EDGE_TARGET = "bad-edge-target"
BAD_POLARITY_HOST = "bad-polarity-host"
BAD_REFER = "bad-refer"
OP_LABEL_GAP = "op-label-gap"


@dataclass(frozen=True)
class Violation:
    code: str
    locus: str  # "node <var>" or "edge <src> :<label>"
    message: str

    def to_json(self) -> dict:
        return {"code": self.code, "locus": self.locus, "message": self.message}


@dataclass(frozen=True)
class ErrorFlags:
    invalid_graph: bool = False
    ontology_mismatch: bool = False
    wrong_intent: bool = False
    compositional_error: bool = False

    def to_json(self) -> dict:
        return {
            "invalid_graph": self.invalid_graph,
            "ontology_mismatch": self.ontology_mismatch,
            "wrong_intent": self.wrong_intent,
            "compositional_error": self.compositional_error,
        }


def _declared_kind(o: Ontology, type_name: str) -> str | None:
    try:
        return o.kind_of(type_name)
    except Exception:
        return None


def _node_admissible(o: Ontology, g: DmrGraph, spec: ArgSpec, var: str) -> bool:
    """Admissibility with the operator closure: ``and``/``or`` are legal
    wherever every ``opN`` child is; ``reference`` wherever an entity is."""
    node = g.nodes[var]
    if node.type_name in (OP_AND, OP_OR):
        return all(
            _node_admissible(o, g, spec, e.target)
            for e in g.out_edges(var)
            if _OP_LABEL_RE.match(e.label) and isinstance(e.target, str) and e.target in g.nodes
        )
    if _declared_kind(o, node.type_name) is None and node.type_name != OP_REFERENCE:
        return True  # unknown type is reported separately
    return o.admits_type(spec, node.type_name)


def validate(
    o: Ontology, g: DmrGraph, context: dict[int, DmrGraph] | None = None
) -> list[Violation]:
    """All conformance violations of ``g`` against ``o``.

    Refer targets are checked for existence only when the dialogue
    ``context`` (turn index -> graph) is supplied; standalone graphs from
    the parsing stage legitimately carry unresolved references.
    """
    violations: list[Violation] = []

    def report(code: str, locus: str, message: str) -> None:
        violations.append(Violation(code, locus, message))

    for var, node in g.nodes.items():
        if _declared_kind(o, node.type_name) is None:
            report(UNKNOWN_TYPE, f"node {var}", f"type {node.type_name!r} is not declared")

    root = g.nodes[g.root]
    root_kind = _declared_kind(o, root.type_name)
    if root.type_name == OP_AND:
        for e in g.out_edges(g.root):
            if not _OP_LABEL_RE.match(e.label):
                continue
            if not isinstance(e.target, str) or e.target not in g.nodes:
                report(BAD_ROOT, f"edge {e.source} :{e.label}",
                       "root conjunction children must be Intent nodes")
                continue
            child = g.nodes[e.target]
            child_kind = _declared_kind(o, child.type_name)
            if child_kind is not None and not (
                child_kind == KIND_INTENT
            ):
                report(BAD_ROOT, f"edge {e.source} :{e.label}",
                       f"root conjunction child {child.type_name!r} is not an Intent")
    elif root_kind is not None and root_kind != KIND_INTENT:
        report(BAD_ROOT, f"node {g.root}",
               f"root {root.type_name!r} is neither an Intent nor `and`")

    for var, node in g.nodes.items():
        source_kind = _declared_kind(o, node.type_name)
        out = g.out_edges(var)
        if node.type_name in (OP_AND, OP_OR):
            numbers = []
            for e in out:
                m = _OP_LABEL_RE.match(e.label)
                if not m:
                    report(BAD_EDGE_LABEL, f"edge {var} :{e.label}",
                           f"operator {node.type_name!r} admits only opN edges")
                else:
                    numbers.append(int(m.group(1)))
            if numbers and sorted(numbers) != list(range(1, len(numbers) + 1)):
                report(OP_LABEL_GAP, f"node {var}",
                       f"opN labels {sorted(numbers)} are not consecutive from op1")
            continue
        if source_kind is None and node.type_name != OP_REFERENCE:
            continue  # cannot resolve arguments of an undeclared type
        allowed = o.resolve_arguments(node.type_name)
        for e in out:
            locus = f"edge {var} :{e.label}"
            if e.label == EDGE_REFER:
                if node.type_name != OP_REFERENCE:
                    report(BAD_REFER, locus, "refer edges originate only from reference nodes")
                elif not isinstance(e.target, ReferTarget):
                    report(BAD_REFER, locus, "refer edges point at (T:<turn> N:<var>) targets")
                elif context is not None:
                    ctx = context.get(e.target.turn)
                    if ctx is None:
                        report(BAD_REFER, locus,
                               f"refer target turn {e.target.turn} has no DMR in context")
                    elif e.target.variable not in ctx.nodes:
                        report(BAD_REFER, locus,
                               f"refer target {e.target} does not exist")
                continue
            spec = allowed.get(e.label)
            if spec is None:
                if e.label == EDGE_POLARITY:
                    report(BAD_POLARITY_HOST, locus,
                           f"polarity attaches only to Entity nodes, not {node.type_name!r}")
                else:
                    report(BAD_EDGE_LABEL, locus,
                           f"{node.type_name!r} has no argument {e.label!r}")
                continue
            if isinstance(e.target, ReferTarget):
                report(BAD_REFER, locus, "only refer edges may point across turns")
            elif e.targets_keyword:
                if spec.allows_keyword != e.target:
                    report(BAD_EDGE_TARGET, locus,
                           f"keyword {e.target!r} is not admissible for {e.label!r}")
            else:
                if e.target in g.nodes and not _node_admissible(o, g, spec, e.target):
                    target_type = g.nodes[e.target].type_name
                    report(BAD_EDGE_TARGET, locus,
                           f"{e.label!r} cannot reach {target_type!r}")
    return violations


def intent_type_set(o: Ontology, g: DmrGraph) -> frozenset[str]:
    """Intent type names present in a graph (declared kinds win over the
    parser's naming-convention guess)."""
    names = set()
    for node in g.nodes.values():
        kind = _declared_kind(o, node.type_name)
        if kind == KIND_INTENT or (kind is None and node.kind is NodeKind.INTENT):
            names.add(node.type_name)
    return frozenset(names)


def _max_var_number(g: DmrGraph) -> int:
    return max(int(v[1:]) for v in g.nodes)


def _intent_subgraph(o: Ontology, g: DmrGraph, intent: str) -> DmrGraph | None:
    """Subgraph reachable from nodes of the given intent type; multiple
    roots are packed under a synthetic ``and``. None when absent."""
    def is_target(node) -> bool:
        if node.type_name == intent:
            return True
        kind = _declared_kind(o, node.type_name)
        return kind == KIND_INTENT and intent in o.types and o.is_subtype(node.type_name, intent)

    matches = [v for v in g.preorder() if is_target(g.nodes[v])]
    if not matches:
        return None

    def reachable(start: str) -> set[str]:
        seen = {start}
        stack = [start]
        while stack:
            for e in g.out_edges(stack.pop()):
                if isinstance(e.target, str) and e.target in g.nodes and e.target not in seen:
                    seen.add(e.target)
                    stack.append(e.target)
        return seen

    covers = {v: reachable(v) for v in matches}
    roots = [v for v in matches if not any(v in covers[u] for u in matches if u != v)]
    keep: set[str] = set()
    for r in roots:
        keep |= covers[r]
    nodes = {v: g.nodes[v] for v in keep}
    edges = [e for e in g.edges if e.source in keep]
    if len(roots) == 1:
        return DmrGraph(g.turn, roots[0], nodes, tuple(edges))
    synthetic = f"v{_max_var_number(g) + 1}"
    nodes[synthetic] = Node(synthetic, NodeKind.OPERATOR, OP_AND)
    edges = [
        Edge(synthetic, f"op{i}", r) for i, r in enumerate(roots, start=1)
    ] + edges
    return DmrGraph(g.turn, synthetic, nodes, tuple(edges))


def classify_errors(
    o: Ontology,
    gold: DmrGraph,
    pred,
    cfg: MatchConfig | None = None,
    compositional_intent: str = "OrderIntent",
) -> ErrorFlags:
    """Independent error flags for a prediction against gold.

    ``pred`` is a graph or a delinearizer result; the fallback flag of
    the latter feeds ``invalid_graph``. The compositional check compares
    the ordering-intent subgraphs by Smatch and is not applicable (False)
    when neither side mentions that intent.
    """
    from .linearizer import DelinearizeResult

    cfg = cfg or MatchConfig()
    invalid = False
    pred_graph = pred
    if isinstance(pred, DelinearizeResult):
        invalid = pred.is_fallback
        pred_graph = pred.graph

    mismatch = bool(validate(o, pred_graph))
    wrong_intent = intent_type_set(o, gold) != intent_type_set(o, pred_graph)

    gold_sub = _intent_subgraph(o, gold, compositional_intent)
    pred_sub = _intent_subgraph(o, pred_graph, compositional_intent)
    if gold_sub is None and pred_sub is None:
        compositional = False
    elif gold_sub is None or pred_sub is None:
        compositional = True
    else:
        compositional = smatch(pred_sub, gold_sub, cfg).f1 != 1

    return ErrorFlags(
        invalid_graph=invalid,
        ontology_mismatch=mismatch,
        wrong_intent=wrong_intent,
        compositional_error=compositional,
    )
