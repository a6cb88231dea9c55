"""Dialogue corpus: loading, NLU filtering, statistics, seq2seq export.

The native format is JSONL, one dialogue per line::

    {"id": "d1", "split": "train", "turns": [
        {"index": 0, "role": "customer", "text": "hi", "dmr": "(v1 / GreetingIntent)"},
        {"index": 1, "role": "agent", "text": "hello!"}]}

An ingest adapter maps common key aliases (speaker/user/system,
utterance, annotation) onto this shape so externally released data can
be pointed at directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
import json

from .graph import DmrGraph, NodeKind, read_graph
from .linearizer import linearize, tokens_to_line
from .metrics import MatchConfig, exact_match
from .ontology import KEYWORD_NEG, OP_AND, OP_OR, OP_REFERENCE, Ontology

ROLE_CUSTOMER = "customer"
ROLE_AGENT = "agent"

_ROLE_ALIASES = {
    "customer": ROLE_CUSTOMER,
    "user": ROLE_CUSTOMER,
    "agent": ROLE_AGENT,
    "system": ROLE_AGENT,
    "assistant": ROLE_AGENT,
}


@dataclass
class Turn:
    index: int
    role: str
    text: str
    dmr: DmrGraph | None = None
    dmr_text: str | None = None
    nlu: bool | None = None
    nlu_reason: str | None = None


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]

    def customer_dmrs(self) -> list[DmrGraph]:
        return [t.dmr for t in self.turns if t.role == ROLE_CUSTOMER and t.dmr is not None]


@dataclass
class Corpus:
    splits: dict[str, list[Dialogue]]
    errors: list[dict] = field(default_factory=list)

    def dialogues(self, split: str | None = None) -> list[Dialogue]:
        if split is not None:
            return list(self.splits.get(split, []))
        return [d for ds in self.splits.values() for d in ds]


def _normalize_turn(raw: dict, position: int) -> dict:
    role = raw.get("role") or raw.get("speaker") or ""
    role = _ROLE_ALIASES.get(str(role).lower())
    if role is None:
        raise ValueError(f"unknown role {raw.get('role') or raw.get('speaker')!r}")
    text = raw.get("text")
    if text is None:
        text = raw.get("utterance", "")
    index = raw.get("index", position)
    dmr = raw.get("dmr") or raw.get("graph") or raw.get("annotation")
    return {"index": int(index), "role": role, "text": str(text), "dmr": dmr}


def _parse_dialogue(record: dict, ontology: Ontology | None,
                    errors: list[dict]) -> Dialogue | None:
    did = str(record.get("id") or record.get("dialogue_id") or record.get("conversationId"))
    raw_turns = record.get("turns") or record.get("utterances")
    if not raw_turns:
        errors.append({"dialogue": did, "error": "no turns"})
        return None
    turns: list[Turn] = []
    for position, raw in enumerate(raw_turns):
        try:
            norm = _normalize_turn(raw, position)
        except Exception as err:
            errors.append({"dialogue": did, "turn": position, "error": str(err)})
            return None
        turn = Turn(norm["index"], norm["role"], norm["text"])
        if norm["dmr"]:
            if norm["role"] == ROLE_AGENT:
                errors.append({
                    "dialogue": did, "turn": norm["index"],
                    "error": "agent turns carry no DMR",
                })
            else:
                try:
                    turn.dmr = read_graph(norm["dmr"], turn=norm["index"], ontology=ontology)
                    turn.dmr_text = norm["dmr"]
                except Exception as err:
                    errors.append({
                        "dialogue": did, "turn": norm["index"], "error": str(err)
                    })
        turns.append(turn)
    if [t.index for t in turns] != list(range(len(turns))):
        errors.append({"dialogue": did, "error": "turn indices not consecutive from 0"})
        return None
    return Dialogue(did, turns)


def load_corpus(path, ontology: Ontology | None = None) -> Corpus:
    """Load a JSONL corpus; malformed records land in the error report
    rather than being silently dropped."""
    path = Path(path)
    splits: dict[str, list[Dialogue]] = {}
    errors: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                errors.append({"line": lineno, "error": f"bad JSON: {err}"})
                continue
            dialogue = _parse_dialogue(record, ontology, errors)
            if dialogue is not None:
                split = str(record.get("split", "train"))
                splits.setdefault(split, []).append(dialogue)
    seen: dict[str, str] = {}
    for split, dialogues in splits.items():
        for d in dialogues:
            if d.id in seen and seen[d.id] != split:
                errors.append({"dialogue": d.id, "error": "dialogue id in two splits"})
            seen[d.id] = split
    return Corpus(splits, errors)


def load_corpus_dir(path, ontology: Ontology | None = None) -> Corpus:
    """Directory with one JSONL file per split (train/dev/test)."""
    path = Path(path)
    splits: dict[str, list[Dialogue]] = {}
    errors: list[dict] = []
    for split in ("train", "dev", "test"):
        for candidate in (path / f"{split}.jsonl", path / f"{split}.json"):
            if candidate.exists():
                sub = load_corpus(candidate, ontology)
                merged: list[Dialogue] = []
                for name, ds in sub.splits.items():
                    merged.extend(ds)
                splits[split] = merged
                errors.extend(sub.errors)
                break
    if not splits:
        raise FileNotFoundError(f"no train/dev/test JSONL files under {path}")
    return Corpus(splits, errors)


# --------------------------------------------------------------------------
# NLU filtering
# --------------------------------------------------------------------------


def _normalized_text(text: str) -> str:
    return " ".join(text.casefold().split())


def _is_single_intent(g: DmrGraph) -> bool:
    return (
        len(g.nodes) == 1
        and not g.edges
        and g.nodes[g.root].kind is NodeKind.INTENT
    )


def nlu_filter(corpus: Corpus, cfg: MatchConfig | None = None) -> Corpus:
    """Flag each customer turn as in or out of the NLU set.

    Train pairs whose (normalized utterance, DMR up to variable renaming)
    also occur in dev or test are excluded as leakage; dev/test turns
    annotated with a single argument-free intent are excluded as trivial.
    The operation is idempotent.
    """
    cfg = cfg or MatchConfig()
    held_out: dict[str, list[DmrGraph]] = {}
    for split in ("dev", "test"):
        for d in corpus.splits.get(split, []):
            for t in d.turns:
                if t.role == ROLE_CUSTOMER and t.dmr is not None:
                    held_out.setdefault(_normalized_text(t.text), []).append(t.dmr)

    def flag(split: str, turn: Turn) -> Turn:
        if turn.role != ROLE_CUSTOMER:
            return replace(turn, nlu=False, nlu_reason="agent-turn")
        if turn.dmr is None:
            return replace(turn, nlu=False, nlu_reason="no-dmr")
        if split == "train":
            for other in held_out.get(_normalized_text(turn.text), []):
                if exact_match(other, turn.dmr, cfg):
                    return replace(turn, nlu=False, nlu_reason="leakage")
        elif split in ("dev", "test") and _is_single_intent(turn.dmr):
            return replace(turn, nlu=False, nlu_reason="single-intent")
        return replace(turn, nlu=True, nlu_reason=None)

    splits = {
        split: [Dialogue(d.id, [flag(split, t) for t in d.turns]) for d in ds]
        for split, ds in corpus.splits.items()
    }
    return Corpus(splits, list(corpus.errors))


# --------------------------------------------------------------------------
# Statistics
# --------------------------------------------------------------------------


@dataclass
class SplitStats:
    dialogues: int = 0
    utterances: int = 0
    customer_utterances: int = 0
    nlu_utterances: int = 0
    utterance_tokens: int = 0
    references: int = 0
    negations: int = 0
    conjunctions: int = 0
    nlu_depth_total: int = 0
    nlu_node_total: int = 0

    def add(self, other: "SplitStats") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    @property
    def utterances_per_dialogue(self) -> float | None:
        return self.utterances / self.dialogues if self.dialogues else None

    @property
    def mean_utterance_length(self) -> float | None:
        return self.utterance_tokens / self.utterances if self.utterances else None

    @property
    def mean_nlu_depth(self) -> float | None:
        return self.nlu_depth_total / self.nlu_utterances if self.nlu_utterances else None

    @property
    def mean_nlu_nodes(self) -> float | None:
        return self.nlu_node_total / self.nlu_utterances if self.nlu_utterances else None

    def to_json(self) -> dict:
        return {
            "dialogues": self.dialogues,
            "utterances": self.utterances,
            "utterances_per_dialogue": self.utterances_per_dialogue,
            "customer_utterances": self.customer_utterances,
            "nlu_utterances": self.nlu_utterances,
            "mean_utterance_length": self.mean_utterance_length,
            "references": self.references,
            "negations": self.negations,
            "conjunctions": self.conjunctions,
            "mean_nlu_dmr_depth": self.mean_nlu_depth,
            "mean_nlu_dmr_nodes": self.mean_nlu_nodes,
        }


@dataclass
class StatsReport:
    per_split: dict[str, SplitStats]

    def to_json(self) -> dict:
        return {split: s.to_json() for split, s in self.per_split.items()}


def dialogue_stats(dialogue: Dialogue) -> SplitStats:
    """Counts for one dialogue; summing these over a partition equals the
    corpus-level numbers."""
    s = SplitStats(dialogues=1)
    for turn in dialogue.turns:
        s.utterances += 1
        s.utterance_tokens += len(turn.text.split())
        if turn.role == ROLE_CUSTOMER:
            s.customer_utterances += 1
        g = turn.dmr
        if g is None:
            continue
        for node in g.nodes.values():
            if node.type_name == OP_REFERENCE:
                s.references += 1
            elif node.type_name in (OP_AND, OP_OR):
                s.conjunctions += 1
        s.negations += sum(
            1 for e in g.edges if e.targets_keyword and e.target == KEYWORD_NEG
        )
        if turn.nlu:
            s.nlu_utterances += 1
            s.nlu_depth_total += g.depth()
            s.nlu_node_total += g.node_count()
    return s


def stats(corpus: Corpus) -> StatsReport:
    """Dataset statistics per split; run :func:`nlu_filter` first so the
    NLU-restricted means have their population."""
    report: dict[str, SplitStats] = {}
    for split, dialogues in corpus.splits.items():
        agg = SplitStats()
        for d in dialogues:
            agg.add(dialogue_stats(d))
        report[split] = agg
    return StatsReport(report)


# --------------------------------------------------------------------------
# Seq2seq export
# --------------------------------------------------------------------------


def export_seq2seq(
    corpus: Corpus, context_size: int, split: str | None = None
) -> list[tuple[str, str]]:
    """(input line, target line) pairs for every NLU-flagged turn.

    The input concatenates the ``context_size`` preceding turns and the
    current one, each prefixed with its role tag; the target is the
    space-joined linearization of the gold DMR.
    """
    if context_size < 0:
        raise ValueError("context_size must be >= 0")
    pairs: list[tuple[str, str]] = []
    for d in corpus.dialogues(split):
        for i, turn in enumerate(d.turns):
            if not turn.nlu or turn.dmr is None:
                continue
            window = d.turns[max(0, i - context_size): i + 1]
            source = " ".join(f"{t.role}: {t.text}" for t in window)
            target = tokens_to_line(linearize(turn.dmr))
            pairs.append((source, target))
    return pairs


# --------------------------------------------------------------------------
# Inter-annotator agreement
# --------------------------------------------------------------------------


def fleiss_kappa(ratings: list[list]) -> float:
    """Fleiss' kappa over an items x raters matrix of category labels."""
    if not ratings:
        raise ValueError("need at least one item")
    n_raters = len(ratings[0])
    if n_raters < 2:
        raise ValueError("need at least two raters")
    if any(len(row) != n_raters for row in ratings):
        raise ValueError("all items need the same number of raters")
    categories = sorted({c for row in ratings for c in row}, key=str)
    cat_index = {c: j for j, c in enumerate(categories)}
    n_items = len(ratings)
    counts = [[0] * len(categories) for _ in range(n_items)]
    for i, row in enumerate(ratings):
        for c in row:
            counts[i][cat_index[c]] += 1
    p_bar = sum(
        (sum(n * n for n in row) - n_raters) / (n_raters * (n_raters - 1))
        for row in counts
    ) / n_items
    totals = [sum(counts[i][j] for i in range(n_items)) for j in range(len(categories))]
    p_j = [t / (n_items * n_raters) for t in totals]
    p_e = sum(p * p for p in p_j)
    if p_e == 1.0:
        return 1.0 if p_bar == 1.0 else 0.0
    return (p_bar - p_e) / (1 - p_e)


def kappa_from_annotations(
    items: list[list[DmrGraph]], cfg: MatchConfig | None = None
) -> float:
    """Group each item's annotations into exact-match equivalence classes
    and compute Fleiss' kappa over the class labels."""
    cfg = cfg or MatchConfig()
    ratings: list[list[int]] = []
    for graphs in items:
        classes: list[DmrGraph] = []
        row: list[int] = []
        for g in graphs:
            for j, rep in enumerate(classes):
                if exact_match(rep, g, cfg):
                    row.append(j)
                    break
            else:
                classes.append(g)
                row.append(len(classes) - 1)
        ratings.append(row)
    return fleiss_kappa(ratings)
