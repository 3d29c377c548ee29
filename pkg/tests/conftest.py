import numpy as np
import pytest

from locle.graph_core import Graph


def random_graph(rng, n, p=0.2, weighted=False):
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    w = rng.uniform(0.1, 2.0, len(edges)) if weighted else None
    return Graph.from_edges(n, edges, w)


def dense_adjacency(g):
    A = np.zeros((g.n, g.n))
    for (i, j), w in zip(g.edges, g.edge_weights):
        A[i, j] = A[j, i] = w
    return A


def dense_norm_adj(A):
    d = A.sum(1)
    inv = np.array([1 / np.sqrt(x) if x > 0 else 0.0 for x in d])
    return inv[:, None] * A * inv[None, :]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
