"""Cross-turn coreference resolvers.

Three model kinds share one protocol:

* ``rule`` picks every candidate from the most recent context DMR that
  contains any candidate;
* ``mlp`` scores [f(ref); f(cand)] where f(n) is the mean word embedding
  of a node and its one-hop DMR neighbors (the node itself included);
* ``gnn`` encodes the whole dialogue graph with relational graph
  convolutions and scores candidate pairs with a sigmoid classifier,
  keeping every candidate whose probability clears a tuned threshold.

Training minimizes binary cross-entropy with Adam, teacher-forces gold
refer edges for context references, and tunes the decision threshold on
a dev split at each validation step. Inference walks referring turns in
order so refer edges carry earlier *predicted* resolutions. Estimator
wrappers expose the scikit-learn ``fit``/``predict``/``get_params``
surface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .dialogue_graph import (
    REFER_EDGE,
    TURN_EDGE,
    CorefQuery,
    DGraphConfig,
    DialogueGraph,
    INV_PREFIX,
    build_dialogue_graph,
    extract_queries,
    gold_resolutions,
    hop_edge,
)
from .graph import DmrGraph, NodeKind, ReferTarget
from .nn import (
    Adam,
    Adjacency,
    bce_with_logits,
    build_adjacency,
    classifier_backward,
    classifier_forward,
    glorot,
    pair_mlp_backward,
    pair_mlp_forward,
    rgcn_backward,
    rgcn_forward,
    sigmoid,
)
from .wordvec import WordVectors

SYMBOL_TURN = "<turn>"
SYMBOL_UNK = "<unk>"

DEFAULT_GRID = tuple(round(0.01 * i, 2) for i in range(1, 100))

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class CorefConfig:
    model: str = "gnn"  # rule | mlp | gnn
    layers: int = 3
    hidden: int = 100
    dropout: float = 0.2
    epochs: int = 20
    batch_size: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    threshold: float | None = None  # None: tune on dev, else fixed
    grid: tuple[float, ...] = DEFAULT_GRID
    k_max: int = 2
    use_turn_nodes: bool = True
    link_resolved_refs: bool = True

    def __post_init__(self):
        if self.model not in ("rule", "mlp", "gnn"):
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.threshold is not None and not (0 < self.threshold < 1):
            raise ValueError("threshold must lie in (0, 1)")
        if not self.grid:
            raise ValueError("tuning grid must be nonempty")

    def dgraph_config(self) -> DGraphConfig:
        return DGraphConfig(
            k_max=self.k_max,
            use_turn_nodes=self.use_turn_nodes,
            link_resolved_refs=self.link_resolved_refs,
        )


@dataclass(frozen=True)
class CorefPrediction:
    turn: int
    variable: str
    predicted: frozenset[tuple[int, str]]
    probabilities: dict[tuple[int, str], float]

    def __post_init__(self):
        if not self.predicted:
            raise ValueError("predicted referent set must be nonempty")


@dataclass
class DialogueSample:
    """One dialogue's customer DMR sequence plus its reference queries."""

    dmrs: list[DmrGraph]
    queries: list[CorefQuery]
    dialogue_id: str | None = None

    @classmethod
    def from_dmrs(cls, dmrs: list[DmrGraph], dialogue_id: str | None = None):
        return cls(dmrs, extract_queries(dmrs), dialogue_id)


def payload_tokens(payload: str) -> list[str]:
    return [t.lower() for t in payload.split() if t != "||"]


# --------------------------------------------------------------------------
# Featurization
# --------------------------------------------------------------------------


@dataclass
class Featurization:
    """Initial node features: fixed word-vector rows for entity and
    reference nodes, learned-table indices for everything else."""

    fixed: np.ndarray  # [N, d]; zero rows where a symbol is used
    symbol_ids: np.ndarray  # [N]; -1 where the fixed row applies
    symbols: tuple[str, ...]

    def assemble(self, embeddings: np.ndarray) -> np.ndarray:
        if embeddings.shape != (len(self.symbols), self.fixed.shape[1]):
            raise ValueError(
                f"embedding table shape {embeddings.shape} does not match "
                f"({len(self.symbols)}, {self.fixed.shape[1]})"
            )
        X = self.fixed.copy()
        mask = self.symbol_ids >= 0
        X[mask] = embeddings[self.symbol_ids[mask]]
        return X


def _node_symbol(node) -> str | None:
    """Symbol key for nodes fed from the learned table; None for nodes
    featurized with word vectors (entities and references)."""
    if node.kind == "turn":
        return SYMBOL_TURN
    if node.kind == "keyword":
        return node.payload
    if node.node_kind is NodeKind.INTENT:
        return node.payload
    if node.node_kind is NodeKind.OPERATOR and not node.payload.startswith("reference"):
        return node.payload
    return None


def featurize(
    G: DialogueGraph, wv: WordVectors, symbols: tuple[str, ...] | None = None
) -> Featurization:
    """Entity and reference nodes get the mean vector of their payload
    tokens (lowercased); intents, ``and``/``or``, keywords, and turn
    nodes index into the learned embedding table."""
    if symbols is None:
        symbols = collect_symbols([G])
    index = {s: i for i, s in enumerate(symbols)}
    fixed = np.zeros((len(G.nodes), wv.dimension), dtype=np.float64)
    symbol_ids = np.full(len(G.nodes), -1, dtype=np.intp)
    for node in G.nodes:
        sym = _node_symbol(node)
        if sym is None:
            fixed[node.id] = wv.mean(payload_tokens(node.payload))
        else:
            symbol_ids[node.id] = index.get(sym, index[SYMBOL_UNK])
    return Featurization(fixed, symbol_ids, tuple(symbols))


def collect_symbols(graphs: list[DialogueGraph]) -> tuple[str, ...]:
    symbols = {SYMBOL_TURN, SYMBOL_UNK}
    for G in graphs:
        for node in G.nodes:
            sym = _node_symbol(node)
            if sym is not None:
                symbols.add(sym)
    return tuple(sorted(symbols))


def symbol_vocabulary(samples: list[DialogueSample]) -> tuple[str, ...]:
    """Symbol set straight from the DMRs (no graphs needed)."""
    symbols = {SYMBOL_TURN, SYMBOL_UNK}
    for sample in samples:
        for g in sample.dmrs:
            for node in g.nodes.values():
                if node.kind is NodeKind.INTENT:
                    symbols.add(node.payload())
                elif node.kind is NodeKind.OPERATOR and node.type_name != "reference":
                    symbols.add(node.payload())
            for e in g.edges:
                if e.targets_keyword:
                    symbols.add(e.target)
    return tuple(sorted(symbols))


def relation_vocabulary(samples: list[DialogueSample], cfg: CorefConfig) -> tuple[str, ...]:
    """Every relation the dialogue graphs can produce under ``cfg``,
    inverses included."""
    rels = set()
    for sample in samples:
        for g in sample.dmrs:
            for e in g.edges:
                if not isinstance(e.target, ReferTarget):
                    rels.add(e.label)
    if cfg.use_turn_nodes:
        rels.add(TURN_EDGE)
        rels.update(hop_edge(k) for k in range(1, cfg.k_max + 1))
    else:
        rels.add(hop_edge(1))
    if cfg.link_resolved_refs:
        rels.add(REFER_EDGE)
    rels |= {INV_PREFIX + r for r in set(rels)}
    return tuple(sorted(rels))


# --------------------------------------------------------------------------
# Model containers and initialization
# --------------------------------------------------------------------------


@dataclass
class RuleModel:
    config: CorefConfig = field(default_factory=lambda: CorefConfig(model="rule"))
    threshold: float = 0.5
    kind: str = "rule"


@dataclass
class MlpModel:
    config: CorefConfig
    in_dim: int  # word-vector dimension
    params: dict[str, np.ndarray]
    threshold: float = 0.5
    kind: str = "mlp"


@dataclass
class GnnModel:
    config: CorefConfig
    relations: tuple[str, ...]
    symbols: tuple[str, ...]
    in_dim: int
    params: dict[str, np.ndarray]
    threshold: float = 0.5
    kind: str = "gnn"


def init_classifier(rng: np.random.Generator, in_dim: int, hidden: int) -> dict:
    return {
        "cls.W1": glorot(rng, 2 * in_dim, hidden),
        "cls.b1": np.zeros(hidden),
        "cls.W2": glorot(rng, hidden, 1),
        "cls.b2": np.zeros(1),
    }


def init_gnn_params(
    rng: np.random.Generator,
    relations: tuple[str, ...],
    n_symbols: int,
    in_dim: int,
    hidden: int,
    layers: int,
) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {
        "emb": rng.normal(0.0, 0.1, size=(n_symbols, in_dim))
    }
    # Layer weights live stacked: the self block first, one block per
    # relation after it. The layer update sums one self term and one
    # term per relation, so the effective fan-in is (1 + R) * d_in;
    # relation blocks are scaled down accordingly. Identity-dominant
    # self blocks keep each node's input features recognizable after
    # several rounds of message passing, which speeds up learning of
    # feature-match patterns on small data.
    rel_scale = 1.0 / np.sqrt(1.0 + len(relations))
    for layer in range(layers):
        d_in = in_dim if layer == 0 else hidden
        blocks = [0.3 * glorot(rng, d_in, hidden)]
        blocks[0][: min(d_in, hidden), : min(d_in, hidden)] += np.eye(min(d_in, hidden))
        for _ in relations:
            blocks.append(rel_scale * glorot(rng, d_in, hidden))
        params[f"L{layer}.W"] = np.vstack(blocks)
    params.update(init_classifier(rng, hidden, hidden))
    return params


def self_weight(model: "GnnModel", layer: int) -> np.ndarray:
    """View of one layer's self-loop weight block."""
    d_in = model.in_dim if layer == 0 else model.config.hidden
    return model.params[f"L{layer}.W"][:d_in]


def relation_weight(model: "GnnModel", layer: int, relation: str) -> np.ndarray:
    """View of one layer's weight block for a relation."""
    d_in = model.in_dim if layer == 0 else model.config.hidden
    k = model.relations.index(relation) + 1
    return model.params[f"L{layer}.W"][k * d_in : (k + 1) * d_in]


def gnn_forward(
    model: GnnModel,
    G: DialogueGraph,
    feats: Featurization | None = None,
    wv: WordVectors | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Node embeddings after the relational graph convolutions."""
    if feats is None:
        if wv is None:
            raise ValueError("either feats or wv must be given")
        feats = featurize(G, wv, model.symbols)
    X = feats.assemble(model.params["emb"])
    adj = build_adjacency(G.edges, len(G.nodes), model.relations)
    H, _ = rgcn_forward(
        model.params,
        model.config.layers,
        X,
        adj,
        dropout=model.config.dropout,
        training=training,
        rng=rng,
    )
    return H


# --------------------------------------------------------------------------
# Shared prediction helpers
# --------------------------------------------------------------------------


def _threshold_set(
    candidates: tuple[tuple[int, str], ...], probs: np.ndarray, beta: float
) -> frozenset[tuple[int, str]]:
    chosen = [c for c, p in zip(candidates, probs) if p >= beta]
    if not chosen:
        chosen = [candidates[int(np.argmax(probs))]]
    return frozenset(chosen)


def _prediction_from_probs(
    query: CorefQuery, probs: np.ndarray, beta: float
) -> CorefPrediction:
    chosen = _threshold_set(query.candidates, probs, beta)
    return CorefPrediction(
        query.turn,
        query.variable,
        chosen,
        {c: float(p) for c, p in zip(query.candidates, probs)},
    )


def _rule_prediction(query: CorefQuery) -> CorefPrediction:
    last_turn = max(t for t, _ in query.candidates)
    chosen = frozenset(c for c in query.candidates if c[0] == last_turn)
    probs = {c: (1.0 if c in chosen else 0.0) for c in query.candidates}
    return CorefPrediction(query.turn, query.variable, chosen, probs)


def _single_candidate_prediction(query: CorefQuery) -> CorefPrediction:
    target = query.candidates[0]
    return CorefPrediction(
        query.turn, query.variable, frozenset({target}), {target: 1.0}
    )


def _one_hop_feature(
    g: DmrGraph, var: str, wv: WordVectors, cache: dict[str, np.ndarray]
) -> np.ndarray:
    """Mean word embedding of a node and its one-hop DMR neighbors."""

    def emb(v: str) -> np.ndarray:
        if v not in cache:
            cache[v] = wv.mean(payload_tokens(g.nodes[v].payload()))
        return cache[v]

    vecs = [emb(var)]
    for e in g.edges:
        if e.source == var:
            if isinstance(e.target, str):
                vecs.append(emb(e.target) if e.target in g.nodes else wv.get(e.target))
        elif e.target == var:
            vecs.append(emb(e.source))
    return np.mean(vecs, axis=0)


def _mlp_pair_features(
    query: CorefQuery, dmrs: list[DmrGraph], wv: WordVectors,
    caches: dict[int, dict] | None = None,
) -> np.ndarray:
    by_turn = {g.turn: g for g in dmrs}
    caches = caches if caches is not None else {}

    def feat(turn: int, var: str) -> np.ndarray:
        return _one_hop_feature(by_turn[turn], var, wv, caches.setdefault(turn, {}))

    ref = feat(query.turn, query.variable)
    return np.stack([np.concatenate([ref, feat(t, v)]) for t, v in query.candidates])


def predict(
    model,
    query: CorefQuery,
    beta: float | None = None,
    dmrs: list[DmrGraph] | None = None,
    resolved: dict | None = None,
    wv: WordVectors | None = None,
) -> CorefPrediction:
    """Resolve one query.

    The mlp and gnn kinds need the dialogue ``dmrs`` (context plus the
    referring turn); the gnn additionally honors ``resolved`` referents
    from earlier turns for its refer edges.
    """
    if len(query.candidates) == 1:
        return _single_candidate_prediction(query)
    if model.kind == "rule":
        return _rule_prediction(query)
    beta = beta if beta is not None else model.threshold
    if dmrs is None:
        raise ValueError(f"{model.kind} prediction needs the dialogue DMRs")
    if wv is None:
        raise ValueError(f"{model.kind} prediction needs word vectors")
    if model.kind == "mlp":
        xs = _mlp_pair_features(query, dmrs, wv)
        logits, _ = pair_mlp_forward(model.params, xs)
        return _prediction_from_probs(query, sigmoid(logits), beta)
    # gnn
    ctx = [g for g in dmrs if g.turn <= query.turn]
    if model.config.link_resolved_refs and resolved:
        resolved = {k: v for k, v in resolved.items() if k[0] < query.turn}
    else:
        resolved = None
    G = build_dialogue_graph(ctx, resolved, model.config.dgraph_config())
    feat = featurize(G, wv, model.symbols)
    H = gnn_forward(model, G, feat)
    ref_idx = np.array([G.origin[(query.turn, query.variable)]])
    probs = np.empty(len(query.candidates))
    cand_idx = np.array([G.origin[c] for c in query.candidates])
    logits, _ = classifier_forward(
        model.params, H, np.repeat(ref_idx, len(cand_idx)), cand_idx
    )
    probs = sigmoid(logits)
    return _prediction_from_probs(query, probs, beta)


def resolve_dialogue(
    model, sample: DialogueSample, beta: float | None = None,
    wv: WordVectors | None = None,
) -> list[CorefPrediction]:
    """Sequential inference: referring turns in order, refer edges fed
    with the predictions already made. Returns one prediction per query
    in ``sample.queries`` order."""
    beta = beta if beta is not None else getattr(model, "threshold", 0.5)
    by_turn: dict[int, list[CorefQuery]] = {}
    for q in sample.queries:
        by_turn.setdefault(q.turn, []).append(q)
    resolved_pred: dict[tuple[int, str], frozenset] = {}
    results: dict[tuple[int, str], CorefPrediction] = {}
    for turn in sorted(by_turn):
        for q in by_turn[turn]:
            pred = predict(
                model, q, beta=beta, dmrs=sample.dmrs,
                resolved=dict(resolved_pred), wv=wv,
            )
            results[(q.turn, q.variable)] = pred
            resolved_pred[(q.turn, q.variable)] = pred.predicted
    return [results[(q.turn, q.variable)] for q in sample.queries]


def evaluate(
    model, samples: list[DialogueSample], wv: WordVectors | None = None,
    beta: float | None = None,
) -> dict:
    """Sequential-inference accuracy with single-candidate exclusion."""
    from .metrics import coref_accuracy

    golds, preds, counts = [], [], []
    for sample in samples:
        predictions = resolve_dialogue(model, sample, beta=beta, wv=wv)
        for q, p in zip(sample.queries, predictions):
            golds.append(q.gold or frozenset())
            preds.append(p.predicted)
            counts.append(len(q.candidates))
    multi = [c for c in counts if c != 1]
    accuracy = (
        float(coref_accuracy(golds, preds, True, counts)) if multi else 0.0
    )
    return {
        "accuracy": accuracy,
        "n_queries": len(counts),
        "n_scored": len(multi),
        "single_candidate_share": (
            (len(counts) - len(multi)) / len(counts) if counts else 0.0
        ),
    }


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass
class _QueryItem:
    query: CorefQuery
    ref: int | None  # graph node id (gnn)
    cands: np.ndarray | None  # graph node ids (gnn)
    labels: np.ndarray | None
    xs: np.ndarray | None = None  # pair features (mlp)


@dataclass
class _GraphItem:
    feat: Featurization
    adj: Adjacency
    queries: list[_QueryItem]


def _labels(query: CorefQuery) -> np.ndarray | None:
    if query.gold is None:
        return None
    return np.array(
        [1.0 if c in query.gold else 0.0 for c in query.candidates], dtype=np.float64
    )


def prepare_gnn_items(
    samples: list[DialogueSample],
    cfg: CorefConfig,
    wv: WordVectors,
    symbols: tuple[str, ...],
    relations: tuple[str, ...],
) -> list[_GraphItem]:
    """One dialogue graph per referring turn, teacher-forced: context
    refer edges come from the gold resolutions of earlier turns."""
    items: list[_GraphItem] = []
    dg_cfg = cfg.dgraph_config()
    for sample in samples:
        gold = gold_resolutions(sample.dmrs)
        by_turn: dict[int, list[CorefQuery]] = {}
        for q in sample.queries:
            by_turn.setdefault(q.turn, []).append(q)
        for turn in sorted(by_turn):
            idx = next(i for i, g in enumerate(sample.dmrs) if g.turn == turn)
            ctx = sample.dmrs[: idx + 1]
            resolved = {k: v for k, v in gold.items() if k[0] < turn} or None
            G = build_dialogue_graph(ctx, resolved, dg_cfg)
            feat = featurize(G, wv, symbols)
            adj = build_adjacency(G.edges, len(G.nodes), relations)
            qitems = [
                _QueryItem(
                    q,
                    G.origin[(q.turn, q.variable)],
                    np.array([G.origin[c] for c in q.candidates], dtype=np.intp),
                    _labels(q),
                )
                for q in by_turn[turn]
            ]
            items.append(_GraphItem(feat, adj, qitems))
    return items


def gnn_batch_grads(
    model: GnnModel,
    batch: list[tuple[_GraphItem, _QueryItem]],
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean pair loss over the batch and gradients for every parameter."""
    params = model.params
    cfg = model.config
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    n_pairs = sum(len(qi.cands) for _, qi in batch)
    grouped: dict[int, tuple[_GraphItem, list[_QueryItem]]] = {}
    for gi, qi in batch:
        grouped.setdefault(id(gi), (gi, []))[1].append(qi)
    total_loss = 0.0
    for gi, qitems in grouped.values():
        X = gi.feat.assemble(params["emb"])
        H, caches = rgcn_forward(
            params, cfg.layers, X, gi.adj, cfg.dropout, training=training, rng=rng
        )
        ref_idx = np.concatenate(
            [np.full(len(qi.cands), qi.ref, dtype=np.intp) for qi in qitems]
        )
        cand_idx = np.concatenate([qi.cands for qi in qitems])
        labels = np.concatenate([qi.labels for qi in qitems])
        logits, ccache = classifier_forward(params, H, ref_idx, cand_idx)
        total_loss += float(bce_with_logits(logits, labels).sum())
        dlogits = (sigmoid(logits) - labels) / n_pairs
        dH = np.zeros_like(H)
        classifier_backward(params, dlogits, ccache, grads, dH)
        dX = rgcn_backward(params, cfg.layers, gi.adj, dH, caches, grads)
        mask = gi.feat.symbol_ids >= 0
        np.add.at(grads["emb"], gi.feat.symbol_ids[mask], dX[mask])
    return total_loss / n_pairs, grads


def _gnn_eval_rows(model: GnnModel, items: list[_GraphItem]) -> list[tuple]:
    """(gold, candidates, probabilities) rows on teacher-forced graphs."""
    rows = []
    for gi in items:
        X = gi.feat.assemble(model.params["emb"])
        H, _ = rgcn_forward(model.params, model.config.layers, X, gi.adj)
        for qi in gi.queries:
            logits, _ = classifier_forward(
                model.params, H,
                np.full(len(qi.cands), qi.ref, dtype=np.intp), qi.cands,
            )
            rows.append((qi.query.gold, qi.query.candidates, sigmoid(logits)))
    return rows


def tune_threshold(rows: list[tuple], grid: tuple[float, ...]) -> tuple[float, float]:
    """Grid value maximizing exact-set accuracy over multi-candidate rows."""
    scored = [r for r in rows if r[0] is not None and len(r[1]) > 1]
    if not scored:
        return grid[0], 0.0
    best_beta, best_acc = grid[0], -1.0
    for beta in grid:
        correct = sum(
            1 for gold, cands, probs in scored
            if _threshold_set(cands, probs, beta) == gold
        )
        acc = correct / len(scored)
        if acc > best_acc:
            best_beta, best_acc = beta, acc
    return best_beta, best_acc


def _trainable_units(items: list[_GraphItem]) -> list[tuple[_GraphItem, _QueryItem]]:
    return [
        (gi, qi)
        for gi in items
        for qi in gi.queries
        if qi.labels is not None and len(qi.cands) > 1
    ]


def train_gnn(
    samples: list[DialogueSample],
    cfg: CorefConfig,
    wv: WordVectors,
    dev: list[DialogueSample] | None = None,
) -> tuple[GnnModel, list[dict]]:
    rng = np.random.default_rng(cfg.seed)
    symbols = symbol_vocabulary(samples + (dev or []))
    relations = relation_vocabulary(samples + (dev or []), cfg)
    items = prepare_gnn_items(samples, cfg, wv, symbols, relations)
    units = _trainable_units(items)
    if not units:
        raise ValueError("empty training set")
    params = init_gnn_params(
        rng, relations, len(symbols), wv.dimension, cfg.hidden, cfg.layers
    )
    model = GnnModel(cfg, relations, symbols, wv.dimension, params,
                     threshold=cfg.threshold or 0.5)
    adam = Adam(params, lr=cfg.learning_rate)
    dev_items = prepare_gnn_items(dev, cfg, wv, symbols, relations) if dev else None
    history: list[dict] = []
    best: tuple[float, float, dict] | None = None  # acc, beta, params copy
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(units))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [units[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = gnn_batch_grads(model, batch, training=True, rng=rng)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            adam.step(grads)
            epoch_loss += loss
            n_batches += 1
        record = {"epoch": epoch, "loss": epoch_loss / max(n_batches, 1)}
        if dev_items is not None:
            rows = _gnn_eval_rows(model, dev_items)
            if cfg.threshold is None:
                beta, acc = tune_threshold(rows, cfg.grid)
            else:
                beta = cfg.threshold
                _, acc = tune_threshold(rows, (beta,))
            record.update({"dev_accuracy": acc, "beta": beta})
            if best is None or acc > best[0]:
                best = (acc, beta, {k: v.copy() for k, v in params.items()})
        history.append(record)
    if best is not None:
        model.params = best[2]
        model.threshold = best[1]
    return model, history


def prepare_mlp_items(
    samples: list[DialogueSample], wv: WordVectors
) -> list[_QueryItem]:
    items = []
    for sample in samples:
        caches: dict[int, dict] = {}
        for q in sample.queries:
            xs = _mlp_pair_features(q, sample.dmrs, wv, caches)
            items.append(_QueryItem(q, None, None, _labels(q), xs=xs))
    return items


def _mlp_eval_rows(model: MlpModel, items: list[_QueryItem]) -> list[tuple]:
    rows = []
    for qi in items:
        logits, _ = pair_mlp_forward(model.params, qi.xs)
        rows.append((qi.query.gold, qi.query.candidates, sigmoid(logits)))
    return rows


def train_mlp(
    samples: list[DialogueSample],
    cfg: CorefConfig,
    wv: WordVectors,
    dev: list[DialogueSample] | None = None,
) -> tuple[MlpModel, list[dict]]:
    rng = np.random.default_rng(cfg.seed)
    items = [
        qi for qi in prepare_mlp_items(samples, wv)
        if qi.labels is not None and len(qi.query.candidates) > 1
    ]
    if not items:
        raise ValueError("empty training set")
    params = init_classifier(rng, wv.dimension, cfg.hidden)
    model = MlpModel(cfg, wv.dimension, params, threshold=cfg.threshold or 0.5)
    adam = Adam(params, lr=cfg.learning_rate)
    dev_items = prepare_mlp_items(dev, wv) if dev else None
    history: list[dict] = []
    best: tuple[float, float, dict] | None = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(items))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [items[i] for i in order[start : start + cfg.batch_size]]
            xs = np.concatenate([qi.xs for qi in batch])
            labels = np.concatenate([qi.labels for qi in batch])
            logits, cache = pair_mlp_forward(params, xs)
            loss = float(bce_with_logits(logits, labels).mean())
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            dlogits = (sigmoid(logits) - labels) / len(labels)
            pair_mlp_backward(params, dlogits, cache, grads)
            adam.step(grads)
            epoch_loss += loss
            n_batches += 1
        record = {"epoch": epoch, "loss": epoch_loss / max(n_batches, 1)}
        if dev_items is not None:
            rows = _mlp_eval_rows(model, dev_items)
            if cfg.threshold is None:
                beta, acc = tune_threshold(rows, cfg.grid)
            else:
                beta = cfg.threshold
                _, acc = tune_threshold(rows, (beta,))
            record.update({"dev_accuracy": acc, "beta": beta})
            if best is None or acc > best[0]:
                best = (acc, beta, {k: v.copy() for k, v in params.items()})
        history.append(record)
    if best is not None:
        model.params = best[2]
        model.threshold = best[1]
    return model, history


def train(
    samples: list[DialogueSample],
    cfg: CorefConfig,
    wv: WordVectors | None = None,
    dev: list[DialogueSample] | None = None,
):
    """Dispatch on ``cfg.model``; returns (model, history)."""
    if cfg.model == "rule":
        return RuleModel(cfg), []
    if wv is None:
        raise ValueError(f"{cfg.model} training needs word vectors")
    if cfg.model == "mlp":
        return train_mlp(samples, cfg, wv, dev)
    return train_gnn(samples, cfg, wv, dev)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_model(model, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "threshold": model.threshold,
        "config": {**model.config.__dict__, "grid": list(model.config.grid)},
    }
    arrays: dict[str, np.ndarray] = {}
    if model.kind == "gnn":
        meta["relations"] = list(model.relations)
        meta["symbols"] = list(model.symbols)
        meta["in_dim"] = model.in_dim
        arrays = model.params
    elif model.kind == "mlp":
        meta["in_dim"] = model.in_dim
        arrays = model.params
    meta["shapes"] = {k: list(v.shape) for k, v in arrays.items()}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_model(path):
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    cfg_raw = dict(meta["config"])
    cfg_raw["grid"] = tuple(cfg_raw["grid"])
    cfg = CorefConfig(**cfg_raw)
    params = {k: data[k] for k in data.files if k != "__meta__"}
    for name, shape in meta["shapes"].items():
        if list(params[name].shape) != shape:
            raise ValueError(f"checkpoint shape mismatch for {name}")
    if meta["kind"] == "rule":
        return RuleModel(cfg, threshold=meta["threshold"])
    if meta["kind"] == "mlp":
        return MlpModel(cfg, meta["in_dim"], params, threshold=meta["threshold"])
    return GnnModel(
        cfg,
        tuple(meta["relations"]),
        tuple(meta["symbols"]),
        meta["in_dim"],
        params,
        threshold=meta["threshold"],
    )


# --------------------------------------------------------------------------
# Estimator wrappers
# --------------------------------------------------------------------------


class _CorefResolverBase(BaseEstimator):
    """Shared fit/predict/score plumbing; X is a list of DialogueSample."""

    _kind = "rule"

    def _make_config(self) -> CorefConfig:
        return CorefConfig(model=self._kind)

    def _check_samples(self, X) -> list[DialogueSample]:
        samples = list(X)
        for s in samples:
            if not isinstance(s, DialogueSample):
                raise TypeError(f"expected DialogueSample, got {type(s).__name__}")
        return samples

    def fit(self, X, y=None, dev=None):
        samples = self._check_samples(X)
        wv = getattr(self, "word_vectors", None)
        self.model_, self.history_ = train(samples, self._make_config(), wv, dev=dev)
        self.threshold_ = self.model_.threshold
        return self

    def predict(self, X) -> list[list[CorefPrediction]]:
        samples = self._check_samples(X)
        wv = getattr(self, "word_vectors", None)
        return [resolve_dialogue(self.model_, s, wv=wv) for s in samples]

    def score(self, X, y=None) -> float:
        samples = self._check_samples(X)
        wv = getattr(self, "word_vectors", None)
        return evaluate(self.model_, samples, wv=wv)["accuracy"]


class RuleCorefResolver(_CorefResolverBase):
    """Predicts every candidate from the most recent candidate-bearing DMR."""

    _kind = "rule"

    def __init__(self):
        pass


class MlpCorefResolver(_CorefResolverBase):
    _kind = "mlp"

    def __init__(self, word_vectors=None, hidden=100, dropout=0.2, epochs=20,
                 batch_size=10, learning_rate=1e-3, seed=0, threshold=None):
        self.word_vectors = word_vectors
        self.hidden = hidden
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.threshold = threshold

    def _make_config(self) -> CorefConfig:
        return CorefConfig(
            model="mlp", hidden=self.hidden, dropout=self.dropout,
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, seed=self.seed,
            threshold=self.threshold,
        )


class GnnCorefResolver(_CorefResolverBase):
    _kind = "gnn"

    def __init__(self, word_vectors=None, layers=3, hidden=100, dropout=0.2,
                 epochs=20, batch_size=10, learning_rate=1e-3, seed=0,
                 threshold=None, k_max=2, use_turn_nodes=True,
                 link_resolved_refs=True):
        self.word_vectors = word_vectors
        self.layers = layers
        self.hidden = hidden
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.threshold = threshold
        self.k_max = k_max
        self.use_turn_nodes = use_turn_nodes
        self.link_resolved_refs = link_resolved_refs

    def _make_config(self) -> CorefConfig:
        return CorefConfig(
            model="gnn", layers=self.layers, hidden=self.hidden,
            dropout=self.dropout, epochs=self.epochs,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            seed=self.seed, threshold=self.threshold, k_max=self.k_max,
            use_turn_nodes=self.use_turn_nodes,
            link_resolved_refs=self.link_resolved_refs,
        )
