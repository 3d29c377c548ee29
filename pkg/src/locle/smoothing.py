"""Truncated feature propagation over the normalized adjacency."""
from __future__ import annotations

import numpy as np

from .graph_core import Graph, GraphError, normalized_adjacency


def propagation_coefficients(T: int, alpha: float) -> np.ndarray:
    """Hop weights ``c_0..c_T``.

    ``(1 - alpha) * alpha**t`` for ``alpha < 1``. At ``alpha >= 1`` that factor
    vanishes or turns negative, so the plain power series ``alpha**t`` is used.
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    powers = alpha ** np.arange(T + 1, dtype=np.float64)
    if alpha < 1:
        return (1.0 - alpha) * powers
    return powers


def propagate_features(g: Graph, X, T: int, alpha: float) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != g.n:
        raise GraphError(f"feature matrix shape {X.shape} does not match {g.n} nodes")
    coef = propagation_coefficients(T, alpha)
    a_norm = normalized_adjacency(g)
    power = X
    H = coef[0] * X
    for t in range(1, T + 1):
        power = a_norm @ power
        H = H + coef[t] * power
    return H
