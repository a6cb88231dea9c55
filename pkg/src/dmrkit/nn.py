"""Small numpy neural toolkit: relational graph convolutions, a pair
classifier, and Adam, all with hand-written backward passes so gradients
can be checked against finite differences."""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.01


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0, LEAKY_SLOPE)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Elementwise binary cross-entropy, numerically stable."""
    return np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Adam:
    """Standard Adam over a flat name -> array parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        # Factored bias correction: p -= a_t * m / (sqrt(v) + eps_t) with
        # a_t = lr * sqrt(1 - b2^t) / (1 - b1^t), algebraically equal to
        # the textbook m_hat / (sqrt(v_hat) + eps) update.
        correction = np.sqrt(1 - self.beta2 ** self.t)
        a_t = self.lr * correction / (1 - self.beta1 ** self.t)
        eps_t = self.eps * correction
        for key, g in grads.items():
            m, v = self.m[key], self.v[key]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            denom = np.sqrt(v)
            denom += eps_t
            update = m / denom
            update *= a_t
            self.params[key] -= update


class Adjacency:
    """Normalized message operator for a fixed relation vocabulary.

    ``big`` stacks one N x N block per relation: block r has
    ``1/|N_r(i)|`` at (i, j) for every edge j -> i under relation r, so
    ``big @ H`` yields all per-relation in-neighbor means in one product.
    Relations absent from the graph give zero blocks."""

    def __init__(self, edges: list[tuple[int, str, int]], num_nodes: int,
                 relations: tuple[str, ...]):
        from scipy.sparse import csr_matrix

        index = {r: k for k, r in enumerate(relations)}
        by_rel: dict[str, list[tuple[int, int]]] = {}
        for s, r, t in edges:
            if r not in index:
                raise ValueError(f"unknown relation {r!r} in graph")
            by_rel.setdefault(r, []).append((s, t))
        rows, cols, vals = [], [], []
        for r, pairs in by_rel.items():
            src = np.array([p[0] for p in pairs], dtype=np.intp)
            dst = np.array([p[1] for p in pairs], dtype=np.intp)
            indeg = np.bincount(dst, minlength=num_nodes)
            rows.append(dst + index[r] * num_nodes)
            cols.append(src)
            vals.append(1.0 / indeg[dst])
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            vals = np.concatenate(vals)
        self.num_nodes = num_nodes
        self.relations = tuple(relations)
        shape = (len(relations) * num_nodes, num_nodes)
        self.big = csr_matrix((vals, (rows, cols)), shape=shape)
        self.big_t = self.big.T.tocsr()


def build_adjacency(
    edges: list[tuple[int, str, int]], num_nodes: int, relations: tuple[str, ...]
) -> Adjacency:
    return Adjacency(edges, num_nodes, relations)


def rgcn_forward(
    params: dict[str, np.ndarray],
    layers: int,
    X: np.ndarray,
    adj: Adjacency,
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    """h_i <- act(W0 h_i + sum_r sum_{j in N_r(i)} W_r h_j / |N_r(i)|),
    applied ``layers`` times; inverted dropout after each activation in
    training mode. Returns final embeddings and the backward cache.

    Layer weights are stored stacked: ``L<l>.W`` has (1 + |relations|)
    row blocks of size d_in, the self block first.
    """
    R = len(adj.relations)
    N, _ = X.shape
    H = X
    caches = []
    for layer in range(layers):
        W = params[f"L{layer}.W"]
        d_in = H.shape[1]
        if W.shape[0] != (R + 1) * d_in:
            raise ValueError(
                f"layer {layer} weight rows {W.shape[0]} do not match "
                f"(1 + {R} relations) * {d_in}"
            )
        stacked = np.empty((N, (R + 1) * d_in), dtype=np.float64)
        stacked[:, :d_in] = H
        M = adj.big @ H  # [R*N, d_in]
        stacked[:, d_in:] = M.reshape(R, N, d_in).transpose(1, 0, 2).reshape(N, R * d_in)
        Z = stacked @ W
        A = leaky_relu(Z)
        if training and dropout > 0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            mask = (rng.random(A.shape) >= dropout) / (1.0 - dropout)
            out = A * mask
        else:
            mask = None
            out = A
        caches.append({"in": stacked, "Z": Z, "mask": mask, "W": W, "d_in": d_in})
        H = out
    return H, caches


def rgcn_backward(
    params: dict[str, np.ndarray],
    layers: int,
    adj: Adjacency,
    dH: np.ndarray,
    caches: list[dict],
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    """Accumulates parameter gradients into ``grads``; returns dX."""
    R = len(adj.relations)
    N = adj.num_nodes
    for layer in reversed(range(layers)):
        cache = caches[layer]
        if cache["mask"] is not None:
            dH = dH * cache["mask"]
        dZ = dH * leaky_relu_grad(cache["Z"])
        grads[f"L{layer}.W"] += cache["in"].T @ dZ
        d_stacked = dZ @ cache["W"].T
        d_in = cache["d_in"]
        dH_in = d_stacked[:, :d_in].copy()
        dM = (
            d_stacked[:, d_in:]
            .reshape(N, R, d_in)
            .transpose(1, 0, 2)
            .reshape(R * N, d_in)
        )
        dH_in += adj.big_t @ dM
        dH = dH_in
    return dH


def pair_mlp_forward(params: dict[str, np.ndarray], xs: np.ndarray):
    """Two affine maps with a LeakyReLU between; ``xs`` rows are the
    concatenated [h_ref ; h_cand] pair features."""
    a1 = xs @ params["cls.W1"] + params["cls.b1"]
    z1 = leaky_relu(a1)
    logits = (z1 @ params["cls.W2"] + params["cls.b2"]).ravel()
    return logits, {"xs": xs, "a1": a1, "z1": z1}


def pair_mlp_backward(
    params: dict[str, np.ndarray],
    dlogits: np.ndarray,
    cache: dict,
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    """Returns the gradient with respect to ``xs``."""
    dl = dlogits[:, None]
    grads["cls.W2"] += cache["z1"].T @ dl
    grads["cls.b2"] += dl.sum(axis=0)
    dz1 = dl @ params["cls.W2"].T
    da1 = dz1 * leaky_relu_grad(cache["a1"])
    grads["cls.W1"] += cache["xs"].T @ da1
    grads["cls.b1"] += da1.sum(axis=0)
    return da1 @ params["cls.W1"].T


def classifier_forward(
    params: dict[str, np.ndarray],
    H: np.ndarray,
    ref_idx: np.ndarray,
    cand_idx: np.ndarray,
):
    """Pair classifier on node embeddings picked out of ``H``."""
    xs = np.concatenate([H[ref_idx], H[cand_idx]], axis=1)
    logits, cache = pair_mlp_forward(params, xs)
    cache = dict(cache, ref=ref_idx, cand=cand_idx)
    return logits, cache


def classifier_backward(
    params: dict[str, np.ndarray],
    dlogits: np.ndarray,
    cache: dict,
    grads: dict[str, np.ndarray],
    dH: np.ndarray,
) -> None:
    dxs = pair_mlp_backward(params, dlogits, cache, grads)
    d = dH.shape[1]
    np.add.at(dH, cache["ref"], dxs[:, :d])
    np.add.at(dH, cache["cand"], dxs[:, d:])
