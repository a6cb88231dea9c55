"""dmrkit: tooling for Dialogue Meaning Representation graphs.

Covers the full path from ontology definition to evaluation: parsing and
serializing DMR graphs, linearizing them for seq2seq training (with a
repairing inverse), validating against a domain ontology, Smatch-based
scoring, dialogue-graph construction, and cross-turn coreference
resolution with rule, MLP, and relational-GCN models.
"""

from .graph import DmrGraph, Edge, GraphError, Node, NodeKind, ReferTarget, read_graph, to_triples, write_graph
from .linearizer import DelinearizeResult, delinearize, linearize, strip_vars
from .metrics import MatchConfig, SmatchScore, coref_accuracy, corpus_eval, exact_match, smatch
from .ontology import ArgSpec, Ontology, OntologyError, TypeDecl, load_ontology, parse_ontology
from .validation import ErrorFlags, Violation, classify_errors, validate

__version__ = "0.1.0"

__all__ = [
    "ArgSpec",
    "DelinearizeResult",
    "DmrGraph",
    "Edge",
    "ErrorFlags",
    "GraphError",
    "MatchConfig",
    "Node",
    "NodeKind",
    "Ontology",
    "OntologyError",
    "ReferTarget",
    "SmatchScore",
    "TypeDecl",
    "Violation",
    "classify_errors",
    "coref_accuracy",
    "corpus_eval",
    "delinearize",
    "exact_match",
    "linearize",
    "load_ontology",
    "parse_ontology",
    "read_graph",
    "smatch",
    "strip_vars",
    "to_triples",
    "validate",
    "write_graph",
    "__version__",
]
