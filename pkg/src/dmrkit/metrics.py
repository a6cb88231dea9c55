"""Graph matching metrics: Smatch, exact match, coreference accuracy.

Smatch maximizes the number of matching triples over injective variable
mappings. Small graphs are scored by exhaustive enumeration; larger ones
by greedy-seeded hill climbing with random restarts. Scores are exact
rationals so ``f1 == 1`` is a meaningful equality.
"""

from __future__ import annotations

import logging
import random
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations

from .graph import DmrGraph, Triple, to_triples

logger = logging.getLogger(__name__)

DEPTH_BUCKETS = ("1", "2", "3", "4+")
NODE_BUCKETS = ("1-2", "3-4", "5-6", "7+")
LENGTH_BUCKETS = ("1-5", "6-10", "11-15", "16+")


@dataclass(frozen=True)
class MatchConfig:
    restarts: int = 4
    seed: int = 0
    oracle_threshold: int = 10  # max variable count for exhaustive search

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class SmatchScore:
    precision: Fraction
    recall: Fraction
    f1: Fraction
    mapping: dict[str, str]
    matched: int
    pred_triples: int
    gold_triples: int
    method: str  # "oracle" or "hillclimb"


def _f1(p: Fraction, r: Fraction) -> Fraction:
    if p + r == 0:
        return Fraction(0)
    return 2 * p * r / (p + r)


class _MatchProblem:
    """Triple-matching between a small side and a large side.

    The mapping is enumerated from the side with fewer variables; the
    matched-triple count is symmetric so scores are unaffected.
    """

    def __init__(self, small: frozenset[Triple], large: frozenset[Triple],
                 small_vars: list[str], large_vars: list[str]):
        self.small_vars = small_vars
        self.large_vars = large_vars
        small_idx = {v: i for i, v in enumerate(small_vars)}
        large_attrs: dict[tuple[str, str], set[str]] = {}
        for t in large:
            if t.kind != "relation":
                large_attrs.setdefault((t.relation, t.arg2), set()).add(t.arg1)
        self.attr_score = [
            {u: 0 for u in large_vars} for _ in small_vars
        ]
        for t in small:
            if t.kind == "relation":
                continue
            for u in large_attrs.get((t.relation, t.arg2), ()):
                self.attr_score[small_idx[t.arg1]][u] += 1
        self.rel_triples = [
            (small_idx[t.arg1], small_idx[t.arg2], t.relation)
            for t in small
            if t.kind == "relation"
        ]
        self.rel_set = {
            (t.relation, t.arg1, t.arg2) for t in large if t.kind == "relation"
        }

    def score(self, assign: tuple[str, ...] | list[str]) -> int:
        total = 0
        for i, u in enumerate(assign):
            total += self.attr_score[i][u]
        for i, j, r in self.rel_triples:
            if (r, assign[i], assign[j]) in self.rel_set:
                total += 1
        return total

    def greedy_seed(self) -> list[str]:
        """Pair variables by attribute overlap (instance types dominate),
        ties broken by shared relation labels with neighbors."""
        small_labels = [set() for _ in self.small_vars]
        for i, j, r in self.rel_triples:
            small_labels[i].add(("out", r))
            small_labels[j].add(("in", r))
        large_labels: dict[str, set] = {u: set() for u in self.large_vars}
        for r, u, v in self.rel_set:
            large_labels[u].add(("out", r))
            large_labels[v].add(("in", r))
        used: set[str] = set()
        assign: list[str] = []
        for i in range(len(self.small_vars)):
            best_u = None
            best_key = None
            for u in self.large_vars:
                if u in used:
                    continue
                key = (
                    self.attr_score[i][u],
                    len(small_labels[i] & large_labels[u]),
                    -self.large_vars.index(u),
                )
                if best_key is None or key > best_key:
                    best_key = key
                    best_u = u
            assign.append(best_u)
            used.add(best_u)
        return assign

    def hillclimb(self, restarts: int, rng: random.Random) -> tuple[int, list[str]]:
        k = len(self.small_vars)
        best_score = -1
        best_assign: list[str] = []
        for attempt in range(restarts):
            if attempt == 0:
                assign = self.greedy_seed()
            else:
                assign = rng.sample(self.large_vars, k)
            current = self.score(assign)
            improved = True
            while improved:
                improved = False
                cand_best = current
                cand_assign = None
                unused = [u for u in self.large_vars if u not in set(assign)]
                for i in range(k):
                    for u in unused:
                        trial = list(assign)
                        trial[i] = u
                        s = self.score(trial)
                        if s > cand_best:
                            cand_best, cand_assign = s, trial
                    for j in range(i + 1, k):
                        trial = list(assign)
                        trial[i], trial[j] = trial[j], trial[i]
                        s = self.score(trial)
                        if s > cand_best:
                            cand_best, cand_assign = s, trial
                if cand_assign is not None:
                    assign, current = cand_assign, cand_best
                    improved = True
            if current > best_score:
                best_score, best_assign = current, list(assign)
        return best_score, best_assign

    def exhaustive(self) -> tuple[int, list[str]]:
        best_score = -1
        best_assign: tuple[str, ...] = ()
        k = len(self.small_vars)
        for perm in permutations(self.large_vars, k):
            s = self.score(perm)
            if s > best_score:
                best_score = s
                best_assign = perm
        return best_score, list(best_assign)


def _variables(triples: frozenset[Triple]) -> list[str]:
    out = []
    seen = set()
    for t in sorted(triples, key=lambda t: (t.kind, t.relation, t.arg1, t.arg2)):
        for v in (t.arg1, t.arg2) if t.kind == "relation" else (t.arg1,):
            if v not in seen:
                seen.add(v)
                out.append(v)
    return out


def _context_codes(triples: frozenset[Triple], variables: list[str]) -> dict[str, tuple]:
    """Canonical structural code per variable: the subtree code combined
    with the code of every incoming context. Isomorphic graphs produce
    identical code multisets; used only to propose a candidate mapping."""
    attrs: dict[str, list] = {v: [] for v in variables}
    children: dict[str, list] = {v: [] for v in variables}
    parents: dict[str, list] = {v: [] for v in variables}
    for t in sorted(triples, key=lambda t: (t.kind, t.relation, t.arg1, t.arg2)):
        if t.kind == "relation":
            children[t.arg1].append((t.relation, t.arg2))
            parents[t.arg2].append((t.relation, t.arg1))
        else:
            attrs[t.arg1].append((t.relation, t.arg2))

    down: dict[str, tuple] = {}

    def down_code(v: str) -> tuple:
        if v not in down:
            down[v] = (
                tuple(sorted(attrs[v])),
                tuple(sorted((r, down_code(c)) for r, c in children[v])),
            )
        return down[v]

    up: dict[str, tuple] = {}

    def up_code(v: str) -> tuple:
        if v not in up:
            up[v] = tuple(
                sorted((r, up_code(p), down_code(p)) for r, p in parents[v])
            )
        return up[v]

    return {v: (down_code(v), up_code(v)) for v in variables}


def _try_perfect_mapping(problem: "_MatchProblem",
                         small: frozenset[Triple], large: frozenset[Triple]):
    """Attempt an exact witness mapping via canonical codes; verified
    against the triple sets, so a hit is always sound."""
    if len(small) != len(large) or len(problem.small_vars) != len(problem.large_vars):
        return None
    small_codes = _context_codes(small, problem.small_vars)
    large_codes = _context_codes(large, problem.large_vars)
    groups: dict[tuple, list[str]] = {}
    for u in problem.large_vars:
        groups.setdefault(large_codes[u], []).append(u)
    assign: list[str] = []
    for v in problem.small_vars:
        bucket = groups.get(small_codes[v])
        if not bucket:
            return None
        assign.append(bucket.pop())
    if problem.score(assign) == len(small):
        return assign
    return None


def smatch(
    a: DmrGraph,
    b: DmrGraph,
    cfg: MatchConfig | None = None,
    include_refer: bool = False,
    force_method: str | None = None,
) -> SmatchScore:
    """Best triple-overlap score between two graphs.

    ``a`` is treated as the prediction side (precision denominator) and
    ``b`` as the reference; f1 is symmetric in the two arguments. The
    search method is exhaustive up to the oracle threshold and
    hill-climbing beyond it, after a verified canonical-isomorphism fast
    path; ``force_method`` ("oracle" or "hillclimb") pins the search for
    comparison experiments.
    """
    cfg = cfg or MatchConfig()
    ta = to_triples(a, include_refer)
    tb = to_triples(b, include_refer)
    va = _variables(ta)
    vb = _variables(tb)
    flipped = len(va) > len(vb)
    small, large = (tb, ta) if flipped else (ta, tb)
    small_vars, large_vars = (vb, va) if flipped else (va, vb)
    problem = _MatchProblem(small, large, small_vars, large_vars)
    assign = None
    if force_method is None:
        assign = _try_perfect_mapping(problem, small, large)
        method = "canonical"
        matched = len(small)
    if assign is None:
        if force_method == "oracle" or (
            force_method is None
            and len(va) <= cfg.oracle_threshold
            and len(vb) <= cfg.oracle_threshold
        ):
            matched, assign = problem.exhaustive()
            method = "oracle"
        else:
            matched, assign = problem.hillclimb(cfg.restarts, random.Random(cfg.seed))
            method = "hillclimb"
    pairs = list(zip(small_vars, assign))
    mapping = {u: s for s, u in pairs} if flipped else dict(pairs)
    precision = Fraction(matched, len(ta))
    recall = Fraction(matched, len(tb))
    return SmatchScore(
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        mapping=mapping,
        matched=matched,
        pred_triples=len(ta),
        gold_triples=len(tb),
        method=method,
    )


def exact_match(
    gold: DmrGraph, pred: DmrGraph, cfg: MatchConfig | None = None
) -> bool:
    """True iff the triple multisets align perfectly under some mapping.

    Decided exhaustively within the oracle threshold; outside it the
    hill-climb answer is sound for True but may under-report.
    """
    cfg = cfg or MatchConfig()
    score = smatch(pred, gold, cfg)
    if score.method == "hillclimb" and score.f1 != 1:
        logger.debug(
            "exact_match beyond oracle threshold decided by hill-climb; "
            "a perfect mapping may have been missed"
        )
    return score.f1 == 1


def coref_accuracy(
    golds: list,
    preds: list,
    exclude_single_candidate: bool = False,
    candidate_counts: list[int] | None = None,
) -> Fraction:
    """Fraction of reference nodes whose predicted referent set is exact.

    With ``exclude_single_candidate`` set, items whose candidate list has
    exactly one entry are dropped (``candidate_counts`` must be given).
    An empty prediction set never matches a nonempty gold set.
    """
    if len(golds) != len(preds):
        raise ValueError(f"length mismatch: {len(golds)} golds vs {len(preds)} preds")
    items = list(zip(golds, preds))
    if exclude_single_candidate:
        if candidate_counts is None:
            raise ValueError("candidate_counts required to exclude single-candidate items")
        if len(candidate_counts) != len(golds):
            raise ValueError("candidate_counts length mismatch")
        items = [it for it, n in zip(items, candidate_counts) if n != 1]
    if not items:
        warnings.warn("no multi-candidate items to score; accuracy defined as 0")
        return Fraction(0)
    correct = sum(1 for g, p in items if frozenset(g) == frozenset(p))
    return Fraction(correct, len(items))


def _bucket(value: int, bounds: tuple[int, ...], labels: tuple[str, ...]) -> str:
    for bound, label in zip(bounds, labels):
        if value <= bound:
            return label
    return labels[-1]


def depth_bucket(depth: int) -> str:
    return _bucket(depth, (1, 2, 3), DEPTH_BUCKETS)


def node_bucket(count: int) -> str:
    return _bucket(count, (2, 4, 6), NODE_BUCKETS)


def length_bucket(tokens: int) -> str:
    return _bucket(tokens, (5, 10, 15), LENGTH_BUCKETS)


@dataclass
class EvalReport:
    total: int
    exact_matches: int
    exact_match_rate: float
    error_portions: dict[str, float]
    multi_intent_share: float | None
    by_depth: dict[str, dict[str, float]]
    by_node_count: dict[str, dict[str, float]]
    by_utterance_length: dict[str, dict[str, float]]

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "exact_matches": self.exact_matches,
            "exact_match_rate": self.exact_match_rate,
            "error_portions": self.error_portions,
            "multi_intent_share": self.multi_intent_share,
            "by_depth": self.by_depth,
            "by_node_count": self.by_node_count,
            "by_utterance_length": self.by_utterance_length,
        }


def _accuracy_table(rows: list[tuple[str, bool]], labels: tuple[str, ...]) -> dict:
    table = {label: {"total": 0, "matched": 0} for label in labels}
    for label, ok in rows:
        table[label]["total"] += 1
        table[label]["matched"] += int(ok)
    return {
        label: {
            "total": cell["total"],
            "matched": cell["matched"],
            "accuracy": (cell["matched"] / cell["total"]) if cell["total"] else None,
        }
        for label, cell in table.items()
        if cell["total"]
    }


def corpus_eval(pairs: list, ontology, cfg: MatchConfig | None = None) -> EvalReport:
    """Aggregate exact match, error portions, and accuracy breakdowns.

    ``pairs`` holds (gold graph, prediction, utterance-or-None) where the
    prediction is a graph or a delinearizer result (whose fallback flag
    feeds the invalid-graph error category).
    """
    from .linearizer import DelinearizeResult
    from .validation import classify_errors

    cfg = cfg or MatchConfig()
    total = len(pairs)
    matches = 0
    flag_counts = {
        "invalid_graph": 0,
        "ontology_mismatch": 0,
        "wrong_intent": 0,
        "compositional_error": 0,
    }
    failures = 0
    wrong_intent_cases = 0
    wrong_intent_multi = 0
    depth_rows: list[tuple[str, bool]] = []
    node_rows: list[tuple[str, bool]] = []
    length_rows: list[tuple[str, bool]] = []
    for gold, pred, utterance in pairs:
        pred_graph = pred.graph if isinstance(pred, DelinearizeResult) else pred
        ok = exact_match(gold, pred_graph, cfg)
        matches += int(ok)
        if not ok:
            failures += 1
            flags = classify_errors(ontology, gold, pred, cfg=cfg)
            for name in flag_counts:
                flag_counts[name] += int(getattr(flags, name))
            if flags.wrong_intent:
                wrong_intent_cases += 1
                gold_intents = [
                    n for n in gold.nodes.values() if n.kind.value == "Intent"
                ]
                wrong_intent_multi += int(len(gold_intents) >= 2)
        depth_rows.append((depth_bucket(gold.depth()), ok))
        node_rows.append((node_bucket(gold.node_count()), ok))
        if utterance is not None:
            length_rows.append((length_bucket(len(utterance.split())), ok))
    return EvalReport(
        total=total,
        exact_matches=matches,
        exact_match_rate=(matches / total) if total else 0.0,
        error_portions={
            name: (count / failures) if failures else 0.0
            for name, count in flag_counts.items()
        },
        multi_intent_share=(
            wrong_intent_multi / wrong_intent_cases if wrong_intent_cases else None
        ),
        by_depth=_accuracy_table(depth_rows, DEPTH_BUCKETS),
        by_node_count=_accuracy_table(node_rows, NODE_BUCKETS),
        by_utterance_length=_accuracy_table(length_rows, LENGTH_BUCKETS),
    )
