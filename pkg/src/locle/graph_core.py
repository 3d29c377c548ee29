"""Undirected attributed graphs and their spectral primitives.

All matrices are derived views of a :class:`Graph`. Nodes with zero degree
get a zero entry in ``D^{-1/2}``, so their rows of the normalized adjacency
are empty.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph on nodes ``0..n-1``.

    ``edges`` is an ``(m, 2)`` int array with ``edges[:, 0] < edges[:, 1]``,
    sorted lexicographically. ``weights`` is ``None`` for an unweighted graph.
    Use :meth:`from_edges` to build one from arbitrary input.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray | None = None
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        if not self._checked:
            g = Graph.from_edges(self.n, self.edges, self.weights)
            object.__setattr__(self, "edges", g.edges)
            object.__setattr__(self, "weights", g.weights)
            object.__setattr__(self, "_checked", True)

    @classmethod
    def from_edges(cls, n, edges, weights=None) -> "Graph":
        n = int(n)
        if n < 0:
            raise GraphError(f"node count must be nonnegative, got {n}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError(f"edge endpoint out of range [0, {n})")
        if np.any(e[:, 0] == e[:, 1]):
            i = int(np.flatnonzero(e[:, 0] == e[:, 1])[0])
            raise GraphError(f"self-loop at node {e[i, 0]}")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        order = np.lexsort((hi, lo))
        canon = np.stack([lo[order], hi[order]], axis=1)
        if len(canon) > 1:
            dup = np.all(canon[1:] == canon[:-1], axis=1)
            if dup.any():
                a, b = canon[1:][dup][0]
                raise GraphError(f"duplicate edge ({a}, {b})")
        w = None
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64).reshape(-1)
            if w.shape[0] != e.shape[0]:
                raise GraphError("weights must have one entry per edge")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise GraphError("edge weights must be finite and nonnegative")
            w = w[order]
        canon.setflags(write=False)
        if w is not None:
            w.setflags(write=False)
        return cls(n, canon, w, _checked=True)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def edge_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.num_edges)
        return self.weights

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric CSR adjacency (weighted if the graph carries weights)."""
        w = self.edge_weights
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        a = sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(self.n, self.n))
        a.sort_indices()
        return a

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}


def degree_vector(g: Graph) -> np.ndarray:
    d = np.zeros(g.n)
    w = g.edge_weights
    np.add.at(d, g.edges[:, 0], w)
    np.add.at(d, g.edges[:, 1], w)
    return d


def _inv_sqrt(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d, dtype=np.float64)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def normalized_adjacency(g: Graph, add_self_loops: bool = False) -> sp.csr_matrix:
    a = g.adjacency
    if add_self_loops:
        a = (a + sp.identity(g.n, format="csr")).tocsr()
    d = np.asarray(a.sum(axis=1)).ravel()
    s = sp.diags(_inv_sqrt(d))
    out = (s @ a @ s).tocsr()
    out.sort_indices()
    return out


def normalized_laplacian(g: Graph) -> sp.csr_matrix:
    return (sp.identity(g.n, format="csr") - normalized_adjacency(g)).tocsr()


def dirichlet_energy(g: Graph, Y) -> float:
    """Return ``Tr(Y^T L Y)`` over the non-isolated nodes.

    Equivalent to the edge sum ``sum w_ij ||Y_i/sqrt(d_i) - Y_j/sqrt(d_j)||^2``;
    isolated nodes contribute nothing.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != g.n:
        raise GraphError(f"Y has {Y.shape[0]} rows, graph has {g.n} nodes")
    d = degree_vector(g)
    active = d > 0
    self_term = float(np.sum(Y[active] ** 2))
    cross = float(np.sum(Y * (normalized_adjacency(g) @ Y)))
    return max(self_term - cross, 0.0)
