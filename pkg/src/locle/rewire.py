"""Dirichlet-energy graph rewiring.

An MLP maps class predictions to node embeddings ``H``; pair affinities
``w(i, j) = max(H_i . H_j, 0)`` decide which edges to drop and which
labeled/unlabeled pairs to connect. A fresh GCN on the rewired graph, fed the
predictions as features, gives the updated predictions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gnn_engine import Adam, GnnHyper, glorot, predict, train_gnn
from .graph_core import Graph, normalized_laplacian

UNRESTRICTED_PAIR_LIMIT = 1_000_000


@dataclass(frozen=True)
class EncoderHyper:
    hidden_dim: int = 64
    out_dim: int = 16
    learning_rate: float = 0.01
    epochs: int = 100
    seed: int = 0


@dataclass
class EncoderModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    hyper: EncoderHyper = field(default_factory=EncoderHyper)
    loss_history: list[float] = field(default_factory=list)

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def embed(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=np.float64)
        return np.maximum(Y @ self.W1 + self.b1, 0.0) @ self.W2 + self.b2


@dataclass
class RewirePlan:
    remove: np.ndarray
    add: np.ndarray
    remove_scores: np.ndarray
    add_scores: np.ndarray
    edge_scores: np.ndarray

    @property
    def empty(self) -> bool:
        return len(self.remove) == 0 and len(self.add) == 0


def optimal_laplacian(H, beta: float) -> np.ndarray:
    """``I - beta * H H^T / ||H H^T||_F``: the normalized Laplacian of minimum
    ``Tr(H^T L H)`` among adjacencies of Frobenius norm ``beta``."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 1:
        H = H[:, None]
    G = H @ H.T
    norm = np.linalg.norm(G)
    if norm == 0:
        raise ValueError("H H^T has zero Frobenius norm")
    return np.eye(H.shape[0]) - beta * G / norm


def dirichlet_loss(g: Graph, Y, lam: float) -> float:
    """``(|V|/|E|) * (Tr(Y^T L Y) - lam * ||L||_F^2)`` with ``L = I - D^-1/2 A D^-1/2``
    of the (weighted) graph."""
    if g.num_edges == 0:
        raise ValueError("dirichlet_loss needs at least one edge")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    L = normalized_laplacian(g)
    trace = float(np.sum(Y * (L @ Y)))
    frob = float(L.multiply(L).sum())
    return g.n / g.num_edges * (trace - lam * frob)


def soft_dirichlet_loss(H, Y, pairs, lam, n=None, with_grad=True):
    """Loss over the soft graph whose support is ``pairs`` with weights
    ``max(H_i . H_j, 0)``; optionally returns ``dLoss/dH``.

    Equals :func:`dirichlet_loss` on ``Graph(n, pairs, weights)``.
    """
    n = H.shape[0] if n is None else n
    src, dst = pairs[:, 0], pairs[:, 1]
    s = np.einsum("ij,ij->i", H[src], H[dst])
    w = np.maximum(s, 0.0)
    d = np.bincount(src, w, minlength=n) + np.bincount(dst, w, minlength=n)
    inv = np.zeros(n)
    inv[d > 0] = 1.0 / np.sqrt(d[d > 0])
    a = w * inv[src] * inv[dst]
    g_e = np.einsum("ij,ij->i", Y[src], Y[dst])
    scale = n / len(pairs)
    trace = float(np.sum(Y * Y)) - 2.0 * float(a @ g_e)
    frob = n + 2.0 * float(a @ a)
    loss = scale * (trace - lam * frob)
    if not with_grad:
        return loss, None
    q = scale * (-2.0 * g_e - 4.0 * lam * a)
    qa = q * a
    per_node = np.bincount(src, qa, minlength=n) + np.bincount(dst, qa, minlength=n)
    r = np.zeros(n)
    r[d > 0] = -0.5 * per_node[d > 0] / d[d > 0]
    dw = q * inv[src] * inv[dst] + r[src] + r[dst]
    ds = dw * (s > 0)
    dH = np.zeros_like(H)
    np.add.at(dH, src, ds[:, None] * H[dst])
    np.add.at(dH, dst, ds[:, None] * H[src])
    return loss, dH


def _pair_mask_block(g: Graph, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return g.adjacency[rows][:, cols].toarray() != 0


def candidate_pairs(g: Graph, train_nodes, F, max_per_node: int | None = None,
                    limit: int = UNRESTRICTED_PAIR_LIMIT, block: int = 4096):
    """Non-edges between ``train_nodes`` and the other nodes, with scores
    ``max(F_i . F_j, 0)``.

    When ``|train| * |rest|`` exceeds ``limit`` (or ``max_per_node`` is given)
    each unlabeled node keeps only its ``max_per_node`` best labeled partners.
    Pairs come back canonical ``(min, max)``.
    """
    tr = np.array(sorted({int(v) for v in train_nodes}), dtype=np.int64)
    rest = np.setdiff1d(np.arange(g.n), tr)
    if len(tr) == 0 or len(rest) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    restrict = max_per_node is not None or len(tr) * len(rest) > limit
    m = max_per_node if max_per_node is not None else max(1, limit // len(rest))
    F = np.asarray(F, dtype=np.float64)
    out_u, out_v, out_s = [], [], []
    for start in range(0, len(rest), block):
        rows = rest[start:start + block]
        S = np.maximum(F[rows] @ F[tr].T, 0.0)
        S[_pair_mask_block(g, rows, tr)] = -np.inf
        if restrict and m < len(tr):
            idx = np.argpartition(-S, m - 1, axis=1)[:, :m]
            keep = np.zeros_like(S, dtype=bool)
            np.put_along_axis(keep, idx, True, axis=1)
            S = np.where(keep, S, -np.inf)
        r, c = np.nonzero(np.isfinite(S))
        out_u.append(rows[r])
        out_v.append(tr[c])
        out_s.append(S[r, c])
    u = np.concatenate(out_u)
    v = np.concatenate(out_v)
    pairs = np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1)
    scores = np.concatenate(out_s)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order], scores[order]


def train_encoder(g: Graph, Y, lam: float, hyper: EncoderHyper | None = None,
                  candidates=None) -> EncoderModel:
    """Fit the edge encoder by Adam on the soft Dirichlet loss.

    The support is the existing edges plus ``candidates`` (an ``(m, 2)`` pair
    array, or ``None``).
    """
    hyper = hyper or EncoderHyper()
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != g.n:
        raise ValueError(f"Y has {Y.shape[0]} rows, graph has {g.n} nodes")
    pairs = g.edges
    if candidates is not None and len(candidates):
        pairs = np.concatenate([pairs, np.asarray(candidates, dtype=np.int64).reshape(-1, 2)])
    if len(pairs) == 0:
        raise ValueError("no edges and no candidate pairs to train the encoder on")
    rng = np.random.default_rng(hyper.seed)
    k = Y.shape[1]
    model = EncoderModel(
        W1=glorot(rng, k, hyper.hidden_dim), b1=np.zeros(hyper.hidden_dim),
        W2=glorot(rng, hyper.hidden_dim, hyper.out_dim), b2=np.zeros(hyper.out_dim),
        hyper=hyper,
    )
    params = model.params()
    opt = Adam(params, lr=hyper.learning_rate)
    for _ in range(hyper.epochs):
        Z1 = Y @ params["W1"] + params["b1"]
        A1 = np.maximum(Z1, 0.0)
        H = A1 @ params["W2"] + params["b2"]
        loss, dH = soft_dirichlet_loss(H, Y, pairs, lam, g.n)
        model.loss_history.append(loss)
        dA1 = dH @ params["W2"].T
        dZ1 = dA1 * (Z1 > 0)
        opt.step({
            "W1": Y.T @ dZ1, "b1": dZ1.sum(0),
            "W2": A1.T @ dH, "b2": dH.sum(0),
        })
    H = model.embed(Y)
    model.loss_history.append(soft_dirichlet_loss(H, Y, pairs, lam, g.n, with_grad=False)[0])
    return model


def _budget(ratio: float, m: int) -> int:
    if ratio < 0:
        raise ValueError("rewiring ratios must be nonnegative")
    return int(math.floor(ratio * m + 1e-9))


def plan_rewiring(g: Graph, H, train_nodes, delta_minus: float, delta_plus: float,
                  max_candidates_per_node: int | None = None,
                  pair_limit: int = UNRESTRICTED_PAIR_LIMIT) -> RewirePlan:
    """Drop the lowest-affinity edges and connect the highest-affinity
    labeled/unlabeled non-adjacent pairs; both counts are fractions of ``|E|``.
    Ties go to the lexicographically smaller pair."""
    H = np.asarray(H, dtype=np.float64)
    m = g.num_edges
    e = g.edges
    edge_scores = np.maximum(np.einsum("ij,ij->i", H[e[:, 0]], H[e[:, 1]]), 0.0) if m else np.zeros(0)
    n_remove = min(_budget(delta_minus, m), m)
    n_add = _budget(delta_plus, m)
    # edges are stored sorted by (min, max), so a stable sort keeps the tie order
    rm_idx = np.argsort(edge_scores, kind="stable")[:n_remove]
    rm_idx = np.sort(rm_idx)
    add = np.zeros((0, 2), dtype=np.int64)
    add_scores = np.zeros(0)
    if n_add > 0:
        if len(train_nodes) == 0:
            raise ValueError("edge addition needs a nonempty training set")
        pairs, scores = candidate_pairs(g, train_nodes, H, max_candidates_per_node, pair_limit)
        order = np.lexsort((pairs[:, 1], pairs[:, 0], -scores))[:n_add]
        order = np.sort(order)
        add, add_scores = pairs[order], scores[order]
    return RewirePlan(
        remove=e[rm_idx].copy(), add=add,
        remove_scores=edge_scores[rm_idx], add_scores=add_scores,
        edge_scores=edge_scores,
    )


def apply_rewiring(g: Graph, plan: RewirePlan, weighted: bool = False) -> Graph:
    """Edge set ``(E | add) - remove``. Unweighted unless ``weighted`` is set,
    in which case every edge carries its affinity score."""
    if plan.empty and not weighted:
        return g
    removed = np.zeros(g.num_edges, dtype=bool)
    if len(plan.remove):
        codes = g.edges[:, 0] * g.n + g.edges[:, 1]
        removed = np.isin(codes, plan.remove[:, 0] * g.n + plan.remove[:, 1])
    edges = np.concatenate([g.edges[~removed], plan.add])
    weights = None
    if weighted:
        weights = np.concatenate([plan.edge_scores[~removed], plan.add_scores])
    return Graph.from_edges(g.n, edges, weights)


def predict_rewired(g_hat: Graph, Y_r, train_nodes, train_labels, hyper: GnnHyper | None = None,
                    num_classes: int | None = None) -> np.ndarray:
    """Train a fresh GCN on ``g_hat`` with the predictions as input features."""
    Y_r = np.asarray(Y_r, dtype=np.float64)
    k = num_classes if num_classes is not None else Y_r.shape[1]
    model = train_gnn(g_hat, Y_r, train_nodes, train_labels, hyper, num_classes=k)
    return predict(model, g_hat, Y_r)
