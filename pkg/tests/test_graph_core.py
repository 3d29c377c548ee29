import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_adjacency, dense_norm_adj, random_graph
from locle.graph_core import (
    Graph, GraphError, degree_vector, dirichlet_energy, normalized_adjacency, normalized_laplacian,
)

PATH2 = Graph.from_edges(2, [(0, 1)])
TRIANGLE = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def test_canonical_edges():
    g = Graph.from_edges(4, [(3, 1), (0, 2), (1, 0)])
    assert g.edges.tolist() == [[0, 1], [0, 2], [1, 3]]
    assert not g.edges.flags.writeable


@pytest.mark.parametrize("edges,msg", [
    ([(0, 0)], "self-loop"),
    ([(0, 1), (1, 0)], "duplicate"),
    ([(0, 5)], "out of range"),
])
def test_rejects_bad_edges(edges, msg):
    with pytest.raises(GraphError, match=msg):
        Graph.from_edges(3, edges)


def test_rejects_bad_weights():
    with pytest.raises(GraphError):
        Graph.from_edges(2, [(0, 1)], [-1.0])
    with pytest.raises(GraphError):
        Graph.from_edges(2, [(0, 1)], [np.nan])


def test_direct_construction_is_validated():
    with pytest.raises(GraphError):
        Graph(2, np.array([[1, 1]]))


def test_degrees():
    assert degree_vector(PATH2).tolist() == [1, 1]
    assert degree_vector(TRIANGLE).tolist() == [2, 2, 2]
    star = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    assert degree_vector(star).tolist() == [3, 1, 1, 1]


def test_normalized_adjacency_examples():
    assert np.allclose(normalized_adjacency(PATH2).toarray(), [[0, 1], [1, 0]])
    A = normalized_adjacency(TRIANGLE).toarray()
    assert np.allclose(A, 0.5 * (1 - np.eye(3)))
    g = Graph.from_edges(3, [(0, 1)])
    assert np.all(normalized_adjacency(g).toarray()[2] == 0)


def test_normalized_laplacian_examples():
    assert np.allclose(normalized_laplacian(PATH2).toarray(), [[1, -1], [-1, 1]])
    assert np.allclose(normalized_laplacian(Graph.from_edges(4, [])).toarray(), np.eye(4))
    L = normalized_laplacian(TRIANGLE).toarray()
    assert np.allclose(np.diag(L), 1) and np.allclose(L[0, 1], -0.5)


def test_laplacian_plus_adjacency_is_identity(rng):
    g = random_graph(rng, 30, 0.15)
    total = normalized_laplacian(g) + normalized_adjacency(g)
    assert np.array_equal(total.toarray(), np.eye(30))


def test_self_loop_normalization_matches_dense(rng):
    g = random_graph(rng, 20, 0.2, weighted=True)
    ref = dense_norm_adj(dense_adjacency(g) + np.eye(20))
    assert np.allclose(normalized_adjacency(g, add_self_loops=True).toarray(), ref, atol=1e-12)


def test_dirichlet_examples():
    assert dirichlet_energy(PATH2, np.eye(2)) == pytest.approx(2.0)
    assert dirichlet_energy(Graph.from_edges(5, []), np.ones((5, 3))) == 0.0


def test_dirichlet_kernel(rng):
    g = random_graph(rng, 25, 0.3)
    d = degree_vector(g)
    Y = np.sqrt(d)[:, None] * np.array([[1.5, -2.0]])
    assert abs(dirichlet_energy(g, Y)) < 1e-9


def edge_sum_energy(g, Y):
    d = degree_vector(g)
    total = 0.0
    for (i, j), w in zip(g.edges, g.edge_weights):
        total += w * np.sum((Y[i] / np.sqrt(d[i]) - Y[j] / np.sqrt(d[j])) ** 2)
    return total


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.floats(0.02, 0.5), st.integers(0, 2**31 - 1), st.booleans())
def test_trace_equals_edge_sum(n, p, seed, weighted):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p, weighted)
    Y = rng.standard_normal((n, 3))
    e = dirichlet_energy(g, Y)
    assert e >= 0
    assert e == pytest.approx(edge_sum_energy(g, Y), abs=1e-9, rel=1e-9)


def test_ratiocut_trace_identity(rng):
    # Tr(C^T L C) for a scaled hard partition indicator vs the same quantity
    # assembled entry by entry from the normalized adjacency
    for trial in range(20):
        n = int(rng.integers(4, 21))
        g = random_graph(rng, n, 0.4)
        if np.any(degree_vector(g) == 0):
            continue
        K = int(rng.integers(2, 4))
        labels = rng.integers(0, K, n)
        labels[:K] = np.arange(K)
        sizes = np.bincount(labels, minlength=K)
        C = np.zeros((n, K))
        C[np.arange(n), labels] = 1 / np.sqrt(sizes[labels])
        At = dense_norm_adj(dense_adjacency(g))
        brute = 0.0
        for k in range(K):
            members = np.flatnonzero(labels == k)
            within = sum(At[i, j] for i in members for j in members)
            brute += (len(members) - within) / sizes[k]
        assert dirichlet_energy(g, C) == pytest.approx(brute, abs=1e-9)
