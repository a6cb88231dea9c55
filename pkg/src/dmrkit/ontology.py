"""Type ontology for DMR graphs: hierarchy, argument specs, inheritance.

An ontology is written in a small line-oriented DSL:

    # comment
    Intent <- OrderIntent | PaymentIntent
    Entity <- FoodItem | DrinkItem
    FoodItem <- Pizza | Burger
    OrderIntent.order-item -> FoodItem | DrinkItem
    Entity.mod -> Size

Hierarchy lines attach children to a parent; argument lines declare an
edge label on a type together with the node types the edge may reach.
The keyword literal ``-`` may appear in a target list to admit the
negation keyword. ``Intent`` and ``Entity`` always exist as roots, the
operators ``and``/``or``/``reference`` and the keyword ``-`` are always
present, and ``OutOfDomainIntent`` is injected as a built-in intent so
that the parser fallback graph is well-typed under any domain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

INTENT_ROOT = "Intent"
ENTITY_ROOT = "Entity"
OP_AND = "and"
OP_OR = "or"
OP_REFERENCE = "reference"
KEYWORD_NEG = "-"
FALLBACK_INTENT = "OutOfDomainIntent"

OPERATORS = (OP_AND, OP_OR, OP_REFERENCE)
BUILTINS = frozenset({OP_AND, OP_OR, OP_REFERENCE, KEYWORD_NEG})

EDGE_REFER = "refer"
EDGE_POLARITY = "polarity"

_TYPE_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_EDGE_LABEL_RE = re.compile(r"^[a-z][a-z0-9]*(-[a-z0-9]+)*$")
_OP_LABEL_RE = re.compile(r"^op([1-9][0-9]*)$")

# Kind tags for declared names.
KIND_INTENT = "intent"
KIND_ENTITY = "entity"
KIND_OPERATOR = "operator"
KIND_KEYWORD = "keyword"


class OntologyError(ValueError):
    """Raised for malformed ontology sources, with the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)


@dataclass(frozen=True)
class ArgSpec:
    """One argument (edge) a type may carry."""

    edge_label: str
    allowed_targets: frozenset[str]
    allows_keyword: str | None = None


@dataclass
class TypeDecl:
    name: str
    parent: str | None
    own_args: dict[str, ArgSpec] = field(default_factory=dict)


# Arguments every entity type inherits regardless of domain.
def _default_entity_args() -> dict[str, ArgSpec]:
    return {
        "mod": ArgSpec("mod", frozenset({ENTITY_ROOT})),
        "quant": ArgSpec("quant", frozenset({ENTITY_ROOT})),
        EDGE_POLARITY: ArgSpec(EDGE_POLARITY, frozenset(), allows_keyword=KEYWORD_NEG),
    }


class Ontology:
    """Immutable type hierarchy with argument inheritance.

    Instances are safe for concurrent reads; all mutation happens in
    :func:`parse_ontology` before the object is handed out.
    """

    def __init__(self, types: dict[str, TypeDecl]):
        self.types = types
        self.intents = frozenset(
            n for n in types if self._root_of(n) == INTENT_ROOT
        )
        self.entities = frozenset(
            n for n in types if self._root_of(n) == ENTITY_ROOT
        )
        self.builtins = BUILTINS
        self._resolved: dict[str, dict[str, ArgSpec]] = {}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Ontology) and self.types == other.types

    def __contains__(self, name: str) -> bool:
        return name in self.types

    def _root_of(self, name: str) -> str | None:
        decl = self.types.get(name)
        while decl is not None and decl.parent is not None:
            decl = self.types.get(decl.parent)
        return decl.name if decl is not None else None

    def kind_of(self, name: str) -> str:
        """Kind tag for a declared name; raises for unknown names."""
        if name in (OP_AND, OP_OR, OP_REFERENCE):
            return KIND_OPERATOR
        if name == KEYWORD_NEG:
            return KIND_KEYWORD
        root = self._root_of(name)
        if root == INTENT_ROOT:
            return KIND_INTENT
        if root == ENTITY_ROOT:
            return KIND_ENTITY
        raise OntologyError(f"unknown type name {name!r}")

    def is_subtype(self, child: str, ancestor: str) -> bool:
        """True iff ``ancestor`` lies on ``child``'s parent chain (reflexive)."""
        for name in (child, ancestor):
            if name not in self.types and name not in BUILTINS:
                raise OntologyError(f"unknown type name {name!r}")
        cur: str | None = child
        while cur is not None:
            if cur == ancestor:
                return True
            decl = self.types.get(cur)
            cur = decl.parent if decl is not None else None
        return False

    def resolve_arguments(self, type_name: str) -> dict[str, ArgSpec]:
        """Inherited argument specs for a type.

        Walks from the root down to ``type_name`` so a child redeclaring
        an edge label overrides its parent's spec for that label. Entity
        types start from the domain-agnostic defaults (mod/quant/polarity);
        ``reference`` nodes carry the resolved Entity arguments plus
        ``refer``; ``and``/``or`` carry none (their ``opN`` edges are
        positional and validated structurally).
        """
        if type_name in self._resolved:
            return dict(self._resolved[type_name])
        if type_name == KEYWORD_NEG:
            resolved: dict[str, ArgSpec] = {}
        elif type_name in (OP_AND, OP_OR):
            resolved = {}
        elif type_name == OP_REFERENCE:
            resolved = self.resolve_arguments(ENTITY_ROOT)
            resolved[EDGE_REFER] = ArgSpec(EDGE_REFER, frozenset())
        else:
            if type_name not in self.types:
                raise OntologyError(f"unknown type name {type_name!r}")
            chain = []
            cur: str | None = type_name
            while cur is not None:
                chain.append(cur)
                cur = self.types[cur].parent
            resolved = _default_entity_args() if chain[-1] == ENTITY_ROOT else {}
            for name in reversed(chain):
                resolved.update(self.types[name].own_args)
        self._resolved[type_name] = resolved
        return dict(resolved)

    def admits_type(self, spec: ArgSpec, type_name: str) -> bool:
        """Whether a concrete node type is a legal target for ``spec``.

        ``reference`` is admissible wherever any entity subtype is;
        ``and``/``or`` admissibility depends on their children and is
        decided by the validator, not here.
        """
        if type_name == OP_REFERENCE:
            return any(
                t in self.types and self._root_of(t) == ENTITY_ROOT
                for t in spec.allowed_targets
            )
        if type_name not in self.types:
            return False
        return any(
            t in self.types and self.is_subtype(type_name, t)
            for t in spec.allowed_targets
        )

    def render(self) -> str:
        """Write the domain-specific part back out as DSL text.

        Built-in types and the injected defaults are omitted, so
        ``parse_ontology(o.render())`` reproduces ``o``.
        """
        lines: list[str] = []
        children: dict[str, list[str]] = {}
        order: list[str] = []
        for name, decl in self.types.items():
            if name == FALLBACK_INTENT and decl.parent == INTENT_ROOT:
                continue
            if decl.parent is not None:
                children.setdefault(decl.parent, []).append(name)
                if decl.parent not in order:
                    order.append(decl.parent)
        for parent in order:
            lines.append(f"{parent} <- " + " | ".join(children[parent]))
        for name, decl in self.types.items():
            for spec in decl.own_args.values():
                targets = sorted(spec.allowed_targets)
                if spec.allows_keyword is not None:
                    targets.append(spec.allows_keyword)
                lines.append(f"{name}.{spec.edge_label} -> " + " | ".join(targets))
        return "\n".join(lines) + ("\n" if lines else "")


def _base_types() -> dict[str, TypeDecl]:
    return {
        INTENT_ROOT: TypeDecl(INTENT_ROOT, None),
        ENTITY_ROOT: TypeDecl(ENTITY_ROOT, None),
        FALLBACK_INTENT: TypeDecl(FALLBACK_INTENT, INTENT_ROOT),
    }


def parse_ontology(text: str) -> Ontology:
    """Parse DSL source into an :class:`Ontology`.

    Raises :class:`OntologyError` with a line number for duplicate type
    names, unknown parents, unknown argument targets, and hierarchy
    cycles or re-parented roots.
    """
    types = _base_types()
    pending: dict[str, int] = {}  # parents used before being attached
    arg_lines: list[tuple[int, str, str, list[str]]] = []

    def _check_cycle(child: str, parent: str, lineno: int) -> None:
        cur: str | None = parent
        while cur is not None:
            if cur == child:
                raise OntologyError("cycle/root violation", lineno)
            decl = types.get(cur)
            cur = decl.parent if decl is not None else None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "<-" in line:
            parent, _, rhs = line.partition("<-")
            parent = parent.strip()
            if not _TYPE_NAME_RE.match(parent):
                raise OntologyError(f"bad type name {parent!r}", lineno)
            if parent in BUILTINS:
                raise OntologyError(f"cannot extend builtin {parent!r}", lineno)
            if parent not in types:
                types[parent] = TypeDecl(parent, None)
                pending[parent] = lineno
            kids = [k.strip() for k in rhs.split("|")]
            for kid in kids:
                if not _TYPE_NAME_RE.match(kid):
                    raise OntologyError(f"bad type name {kid!r}", lineno)
                if kid in (INTENT_ROOT, ENTITY_ROOT):
                    raise OntologyError("cycle/root violation", lineno)
                if kid in BUILTINS:
                    raise OntologyError(f"cannot re-parent builtin {kid!r}", lineno)
                existing = types.get(kid)
                if existing is not None and existing.parent is not None:
                    raise OntologyError(f"duplicate type name {kid!r}", lineno)
                _check_cycle(kid, parent, lineno)
                if existing is None:
                    types[kid] = TypeDecl(kid, parent)
                else:
                    existing.parent = parent
                    pending.pop(kid, None)
        elif "->" in line:
            lhs, _, rhs = line.partition("->")
            lhs = lhs.strip()
            if "." not in lhs:
                raise OntologyError(f"malformed argument line {lhs!r}", lineno)
            owner, _, label = lhs.partition(".")
            if not _EDGE_LABEL_RE.match(label):
                raise OntologyError(f"bad edge label {label!r}", lineno)
            targets = [t.strip() for t in rhs.split("|")]
            arg_lines.append((lineno, owner.strip(), label, targets))
        else:
            raise OntologyError(f"unparseable line {line!r}", lineno)

    for name, lineno in pending.items():
        raise OntologyError(f"unknown parent {name!r}", lineno)

    for lineno, owner, label, targets in arg_lines:
        if owner not in types:
            raise OntologyError(f"unknown type name {owner!r}", lineno)
        allowed: set[str] = set()
        keyword: str | None = None
        for t in targets:
            if t == KEYWORD_NEG:
                keyword = KEYWORD_NEG
            elif t in types:
                allowed.add(t)
            else:
                raise OntologyError(f"unknown target type {t!r}", lineno)
        types[owner].own_args[label] = ArgSpec(label, frozenset(allowed), keyword)

    return Ontology(types)


def load_ontology(path) -> Ontology:
    with open(path, encoding="utf-8") as fh:
        return parse_ontology(fh.read())
