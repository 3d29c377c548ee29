"""Stochastic block model graphs with Gaussian class-mean features."""
from __future__ import annotations

import math

import numpy as np

from .evalio import Dataset
from .graph_core import Graph


def sbm_dataset(n: int = 600, k: int = 3, p_in: float = 0.10, p_out: float = 0.01,
                d: int = 16, separation: float = 1.5, sigma: float = 1.0,
                seed: int = 0) -> Dataset:
    """Equal blocks; class ``c`` has feature mean ``(separation*sigma/sqrt 2) e_c``
    so every pair of class means is ``separation*sigma`` apart."""
    if k < 1 or n < k:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if d < k:
        raise ValueError(f"feature dimension {d} is smaller than k={k}")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0 <= p <= 1:
            raise ValueError(f"{name} must be a probability, got {p}")
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(k), -(-n // k))[:n]
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(y[iu] == y[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    means = np.zeros((k, d))
    means[np.arange(k), np.arange(k)] = separation * sigma / math.sqrt(2)
    X = means[y] + sigma * rng.standard_normal((n, d))
    names = [f"class_{c}" for c in range(k)]
    texts = [f"Node {i} with {len(names)} possible topics." for i in range(n)]
    return Dataset(Graph.from_edges(n, edges), X, names, texts, y.astype(np.int64))
