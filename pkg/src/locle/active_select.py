"""Stage-I active node selection.

Nodes are embedded by the top left singular vectors of the propagated
features, grouped by K-Means, and the active set is filled with cluster
centers followed by the nodes closest to their own center.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph_core import Graph
from .smoothing import propagate_features

_DENSE_SVD_LIMIT = 50_000_000


@dataclass(frozen=True)
class ActiveSelection:
    centers: list[int]
    members: list[int]
    scores: list[float]
    assignments: np.ndarray = field(repr=False, default=None)


@dataclass
class KMeansResult:
    assignments: np.ndarray
    center_nodes: np.ndarray
    centroids: np.ndarray
    sse_history: list[float]
    n_iter: int

    def __iter__(self):
        # allows ``assignments, centers = kmeans(...)``
        return iter((self.assignments, self.center_nodes))


def _fix_signs(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def _randomized_range(H, tau, rng, n_oversample=10, n_iter=4):
    k = min(tau + n_oversample, min(H.shape))
    Q = H @ rng.standard_normal((H.shape[1], k))
    for _ in range(n_iter):
        Q, _ = np.linalg.qr(Q)
        Q, _ = np.linalg.qr(H.T @ Q)
        Q = H @ Q
    Q, _ = np.linalg.qr(Q)
    return Q


def truncated_left_singular_vectors(H, tau: int, seed=0, method: str = "auto") -> np.ndarray:
    """Top-``tau`` left singular vectors of ``H`` as an ``(n, tau)`` matrix.

    ``method`` is ``"dense"``, ``"randomized"`` or ``"auto"`` (dense unless
    ``H`` is large). Each column is sign-fixed so that its largest-magnitude
    entry is positive.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise ValueError("H must be a 2-d matrix")
    if not np.all(np.isfinite(H)):
        raise ValueError("H contains non-finite entries")
    tau = int(tau)
    if not 1 <= tau <= min(H.shape):
        raise ValueError(f"tau must lie in [1, {min(H.shape)}], got {tau}")
    if method == "auto":
        method = "dense" if H.size <= _DENSE_SVD_LIMIT else "randomized"
    if method == "dense":
        U, _, _ = np.linalg.svd(H, full_matrices=False)
        U = U[:, :tau]
    elif method == "randomized":
        rng = np.random.default_rng(seed)
        Q = _randomized_range(H, tau, rng)
        Ub, _, _ = np.linalg.svd(Q.T @ H, full_matrices=False)
        U = Q @ Ub[:, :tau]
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    return _fix_signs(U)


def _sq_dists(U, C):
    d = (U * U).sum(1)[:, None] - 2.0 * U @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(U, K, rng):
    n = U.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(U, U[chosen])[:, 0]
    for _ in range(1, K):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_dists(U, U[[nxt]])[:, 0])
    return U[chosen].copy()


def kmeans(U, K: int, seed=0, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeding.

    Runs until the assignment stops changing or ``max_iter``. A cluster that
    empties out is re-seeded with the point farthest from its centroid, which
    keeps the within-cluster SSE non-increasing. ``center_nodes[j]`` is the
    member of cluster ``j`` nearest to its centroid (smallest id on ties).
    """
    U = np.asarray(U, dtype=np.float64)
    n = U.shape[0]
    K = int(K)
    if K < 1 or K > n:
        raise ValueError(f"K must lie in [1, {n}], got {K}")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(U, K, rng)
    labels = np.full(n, -1)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        dist = _sq_dists(U, C)
        new = np.argmin(dist, axis=1)
        counts = np.bincount(new, minlength=K)
        for j in np.flatnonzero(counts == 0):
            # steal the worst-fitting point from a cluster with more than one member
            own = dist[np.arange(n), new]
            own = np.where(np.bincount(new, minlength=K)[new] > 1, own, -1.0)
            far = int(np.argmax(own))
            new[far] = j
        if it > 1 and np.array_equal(new, labels):
            break
        labels = new
        for j in range(K):
            C[j] = U[labels == j].mean(axis=0)
        history.append(float(_sq_dists(U, C)[np.arange(n), labels].sum()))
    dist = _sq_dists(U, C)
    centers = np.empty(K, dtype=np.int64)
    for j in range(K):
        members = np.flatnonzero(labels == j)
        # argmin returns the first minimum, i.e. the smallest id
        centers[j] = members[np.argmin(dist[members, j])]
    return KMeansResult(labels, centers, C, history, it)


def closeness_score(U, i: int, center: int) -> float:
    U = np.asarray(U)
    return 1.0 / (1.0 + float(np.linalg.norm(U[i] - U[center])))


def select_active_nodes(
    g: Graph,
    X,
    *,
    T: int = 2,
    alpha: float = 1.0,
    tau: int = 128,
    K: int,
    B_ini: int,
    seed=0,
    decompose: str = "H",
) -> ActiveSelection:
    """Pick ``B_ini`` nodes: the ``K`` cluster centers, then the remaining
    nodes ranked globally by closeness to their own cluster's center."""
    if not 1 <= K <= B_ini <= g.n:
        raise ValueError(f"need 1 <= K <= B_ini <= n, got K={K}, B_ini={B_ini}, n={g.n}")
    if decompose == "H":
        base = propagate_features(g, X, T, alpha)
    elif decompose == "X":
        base = np.asarray(X, dtype=np.float64)
    else:
        raise ValueError(f"decompose must be 'H' or 'X', got {decompose!r}")
    U = truncated_left_singular_vectors(base, tau, seed=seed)
    km = kmeans(U, K, seed=seed)
    centers = [int(c) for c in km.center_nodes]
    own_center = km.center_nodes[km.assignments]
    dist = np.linalg.norm(U - U[own_center], axis=1)
    score = 1.0 / (1.0 + dist)
    is_center = np.zeros(g.n, dtype=bool)
    is_center[centers] = True
    rest = np.flatnonzero(~is_center)
    order = rest[np.lexsort((rest, -score[rest]))]
    picked = [int(v) for v in order[: B_ini - K]]
    members = centers + picked
    return ActiveSelection(
        centers=centers,
        members=members,
        scores=[float(score[v]) for v in members],
        assignments=km.assignments,
    )
