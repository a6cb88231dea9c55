"""Variable-free bracket linearization and its repairing inverse.

``linearize`` drops refer edges and variables and emits a preorder
bracket expression: a node is ``( payload-words ( :label child ... ) )``
with ``||`` kept as its own token. ``delinearize`` is total: it runs a
shift-reduce parse that drops stray closing brackets, appends missing
closers at end of input, and tolerates label-in-node and bare-word-child
shorthand; sequences it cannot classify into a node tree come back as
the ``OutOfDomainIntent`` fallback graph, never as an exception.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import (
    DmrGraph,
    Edge,
    GraphError,
    Node,
    NodeKind,
    node_from_payload,
)
from .ontology import FALLBACK_INTENT, KEYWORD_NEG, Ontology

TokenSeq = list[str]

# Diagnostic codes emitted by the repair parser.
MISSING_BRACKET = "missing-bracket"
REDUNDANT_BRACKET = "redundant-bracket"
STRAY_TOKEN = "stray-token"
DANGLING_LABEL = "dangling-label"
TRAILING_INPUT = "trailing-input"
KEYWORD_ARGS_DROPPED = "keyword-args-dropped"
FAULT_FRAME_START = "fault:frame-start"
FAULT_EMPTY_NODE = "fault:empty-node"
FAULT_EMPTY_EXPRESSION = "fault:empty-expression"
FAULT_INVALID_GRAPH = "fault:invalid-graph"


def linearize(g: DmrGraph) -> TokenSeq:
    """Refer edges removed, variables removed, preorder brackets.

    Reentrant nodes are duplicated under each parent; the output always
    has balanced brackets.
    """

    def node_tokens(var: str) -> list[str]:
        node = g.nodes[var]
        toks = ["("] + node.payload().split()
        args = [e for e in g.out_edges(var) if not e.is_refer]
        if args:
            toks.append("(")
            for e in args:
                toks.append(":" + e.label)
                if e.targets_keyword:
                    toks += ["(", e.target, ")"]
                else:
                    toks += node_tokens(e.target)
            toks.append(")")
        toks.append(")")
        return toks

    return node_tokens(g.root)


def tokens_to_line(tokens: TokenSeq) -> str:
    return " ".join(tokens)


def line_to_tokens(line: str) -> TokenSeq:
    return line.split()


def strip_vars(g: DmrGraph) -> DmrGraph:
    """Drop refer edges and renumber variables in DFS preorder."""
    rename = {var: f"v{i}" for i, var in enumerate(g.preorder(), start=1)}
    nodes = {
        rename[var]: Node(
            rename[var],
            n.kind,
            n.type_name,
            lexical_value=n.lexical_value,
            canonical_value=n.canonical_value,
        )
        for var, n in g.nodes.items()
    }
    edges = tuple(
        Edge(rename[e.source], e.label, rename[e.target] if e.target in rename else e.target)
        for e in g.edges
        if not e.is_refer
    )
    return DmrGraph(g.turn, "v1", nodes, edges)


@dataclass
class _TreeNode:
    payload: list[str] = field(default_factory=list)
    children: list[tuple[str, "_TreeNode"]] = field(default_factory=list)


@dataclass
class _NodeFrame:
    tree: _TreeNode
    in_payload: bool = True


@dataclass
class _GroupFrame:
    owner: _NodeFrame
    pending_label: str | None = None
    implicit: bool = False


@dataclass
class DelinearizeResult:
    graph: DmrGraph
    diagnostics: list[str]
    is_fallback: bool

    @property
    def repairs(self) -> list[str]:
        return [d for d in self.diagnostics if not d.startswith("fault:")]


def fallback_graph(turn: int) -> DmrGraph:
    return DmrGraph(
        turn, "v1", {"v1": Node("v1", NodeKind.INTENT, FALLBACK_INTENT)}, ()
    )


class _Fault(Exception):
    def __init__(self, code: str):
        self.code = code


def _parse_tree(tokens: TokenSeq, diags: list[str]) -> _TreeNode:
    stack: list[_NodeFrame | _GroupFrame] = []
    root: _TreeNode | None = None

    def attach(tree: _TreeNode) -> None:
        nonlocal root
        if not stack:
            root = tree
            return
        top = stack[-1]
        assert isinstance(top, _GroupFrame)
        if top.pending_label is None:
            diags.append(STRAY_TOKEN)
            return
        top.owner.tree.children.append((top.pending_label, tree))
        top.pending_label = None

    def close_node(frame: _NodeFrame) -> None:
        if not frame.tree.payload:
            raise _Fault(FAULT_EMPTY_NODE)
        attach(frame.tree)

    def close_top() -> None:
        top = stack.pop()
        if isinstance(top, _GroupFrame):
            if top.pending_label is not None:
                diags.append(DANGLING_LABEL)
            top.owner.in_payload = False
            if top.implicit:
                # Implicit groups share the node's closing bracket.
                owner = stack.pop()
                assert isinstance(owner, _NodeFrame)
                close_node(owner)
        else:
            close_node(top)

    pos = 0
    n = len(tokens)
    while pos < n:
        tok = tokens[pos]
        pos += 1
        if root is not None:
            diags.append(TRAILING_INPUT)
            break
        top = stack[-1] if stack else None
        if tok == "(":
            if top is None:
                stack.append(_NodeFrame(_TreeNode()))
            elif isinstance(top, _NodeFrame):
                if top.in_payload and not top.tree.payload:
                    raise _Fault(FAULT_FRAME_START)
                stack.append(_GroupFrame(top))
            else:
                if top.pending_label is None:
                    raise _Fault(FAULT_FRAME_START)
                stack.append(_NodeFrame(_TreeNode()))
        elif tok == ")":
            if top is None:
                diags.append(REDUNDANT_BRACKET)
            else:
                close_top()
        elif tok.startswith(":") and len(tok) > 1:
            label = tok[1:]
            if top is None:
                diags.append(STRAY_TOKEN)
            elif isinstance(top, _NodeFrame):
                if top.in_payload and not top.tree.payload:
                    raise _Fault(FAULT_FRAME_START)
                stack.append(_GroupFrame(top, pending_label=label, implicit=True))
            else:
                if top.pending_label is not None:
                    diags.append(DANGLING_LABEL)
                top.pending_label = label
        else:
            if top is None:
                diags.append(STRAY_TOKEN)
            elif isinstance(top, _NodeFrame):
                if top.in_payload:
                    top.tree.payload.append(tok)
                else:
                    diags.append(STRAY_TOKEN)
            else:
                if top.pending_label is None:
                    diags.append(STRAY_TOKEN)
                else:
                    top.owner.tree.children.append(
                        (top.pending_label, _TreeNode(payload=[tok]))
                    )
                    top.pending_label = None

    while stack:
        diags.append(MISSING_BRACKET)
        close_top()

    if root is None:
        raise _Fault(FAULT_EMPTY_EXPRESSION)
    return root


def _split_segments(words: list[str]) -> list[str]:
    segments: list[list[str]] = [[]]
    for w in words:
        if w == "||":
            segments.append([])
        else:
            segments[-1].append(w)
    return [" ".join(s) for s in segments]


def _build_graph(
    tree: _TreeNode, turn: int, diags: list[str], ontology: Ontology | None
) -> DmrGraph:
    counter = [0]
    nodes: dict[str, Node] = {}
    edges: list[Edge] = []

    def build(t: _TreeNode) -> str:
        counter[0] += 1
        var = f"v{counter[0]}"
        nodes[var] = node_from_payload(var, _split_segments(t.payload), ontology)
        for label, child in t.children:
            if child.payload == [KEYWORD_NEG]:
                if child.children:
                    diags.append(KEYWORD_ARGS_DROPPED)
                edges.append(Edge(var, label, KEYWORD_NEG))
            else:
                edges.append(Edge(var, label, build(child)))
        return var

    root = build(tree)
    return DmrGraph(turn, root, nodes, tuple(edges))


def delinearize(
    tokens: TokenSeq, turn: int = 0, ontology: Ontology | None = None
) -> DelinearizeResult:
    """Total inverse of :func:`linearize` with bracket repair.

    Variables are assigned in depth-first preorder (v1, v2, ...). On an
    unrecoverable sequence the fallback graph is returned and the fault
    is recorded in the diagnostics.
    """
    diags: list[str] = []
    try:
        tree = _parse_tree(list(tokens), diags)
        graph = _build_graph(tree, turn, diags, ontology)
    except _Fault as fault:
        diags.append(fault.code)
        return DelinearizeResult(fallback_graph(turn), diags, True)
    except GraphError as err:
        diags.append(f"{FAULT_INVALID_GRAPH}:{err}")
        return DelinearizeResult(fallback_graph(turn), diags, True)
    return DelinearizeResult(graph, diags, False)
