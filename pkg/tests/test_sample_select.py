import math

import numpy as np
import pytest

from conftest import dense_adjacency, random_graph
from reference_select import reference_select
from locle.graph_core import Graph
from locle.sample_select import (
    SIGMA, label_disharmonicity, label_disharmonicity_all, label_entropy, label_entropy_all,
    select_from_scores, select_informative,
)


def test_entropy_examples():
    Y = np.array([[1.0, 0, 0, 0], [0.25] * 4, [0.5, 0.5, 0, 0]])
    assert abs(label_entropy(Y, 0)) < 1e-8
    assert label_entropy(Y, 1) == pytest.approx(math.log(4), abs=1e-8)
    assert label_entropy(Y, 2) == pytest.approx(math.log(2), abs=1e-8)


@pytest.mark.parametrize("k", range(2, 11))
def test_entropy_calibration(k):
    assert label_entropy_all(np.eye(k)).max() < 1e-8
    # the smoothing term shifts a uniform row to ln k - ln(1 + k sigma)
    exact = math.log(k) - math.log1p(k * SIGMA)
    assert label_entropy(np.full((1, k), 1 / k), 0) == pytest.approx(exact, abs=1e-12)
    assert abs(label_entropy(np.full((1, k), 1 / k), 0) - math.log(k)) <= k * SIGMA + 1e-15


def test_entropy_nonnegative_on_one_hot():
    assert np.all(label_entropy_all(np.eye(4)) == 0.0)


def test_entropy_bounds(rng):
    Y = rng.dirichlet(np.ones(5) * 0.3, 200)
    le = label_entropy_all(Y)
    assert np.all(le >= 0) and np.all(le <= math.log(5) + 5 * SIGMA)


def test_disharmonicity_examples():
    path = Graph.from_edges(2, [(0, 1)])
    assert label_disharmonicity(path, np.eye(2), 0) == pytest.approx(math.sqrt(2))
    star = Graph.from_edges(3, [(0, 1), (0, 2)])
    Y = np.array([[1.0, 0], [1.0, 0], [0, 1.0]])
    assert label_disharmonicity(star, Y, 0) == pytest.approx(math.sqrt(0.5))
    iso = Graph.from_edges(3, [(0, 1)])
    assert label_disharmonicity(iso, np.eye(3), 2) == 0.0
    tri = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert label_disharmonicity(tri, np.full((3, 2), 0.5), 1) == 0.0


def test_disharmonicity_gradient_identity(rng):
    for _ in range(50):
        n = int(rng.integers(2, 101))
        g = random_graph(rng, n, float(rng.uniform(0.02, 0.3)))
        Y = rng.dirichlet(np.ones(4), n)
        A = dense_adjacency(g)
        d = A.sum(1)
        LY = (np.diag(d) - A) @ Y
        lh = label_disharmonicity_all(g, Y)
        for i in range(n):
            ref = np.linalg.norm(LY[i]) / d[i] if d[i] > 0 else 0.0
            assert abs(lh[i] - ref) < 1e-9
        assert np.all(lh <= math.sqrt(2) + 1e-12)


def test_matches_exhaustive_reference(rng):
    for _ in range(100):
        size = int(rng.integers(1, 21))
        pool = np.sort(rng.choice(60, size, replace=False))
        # coarse integer scores force plenty of ties
        lh = rng.integers(0, 5, size).astype(float)
        le = rng.integers(0, 5, size).astype(float)
        qc, qu = int(rng.integers(0, 9)), int(rng.integers(0, 9))
        c, u, _ = select_from_scores(pool, lh, le, qc, qu)
        rc, ru = reference_select(pool.tolist(), dict(zip(pool.tolist(), lh)), dict(zip(pool.tolist(), le)), qc, qu)
        assert set(c) == rc and set(u) == ru


def test_dominant_certain_node():
    g = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
    Y = np.full((6, 3), 1 / 3)
    Y[3] = [1, 0, 0]
    Y[2] = Y[4] = [1, 0, 0]  # neighbors agree, LH(3) = 0
    Y[1] = [0, 1, 0]  # gives node 0 a disagreeing neighbor
    res = select_informative(g, Y, [0, 1, 3, 5], 1, 1)
    assert res.certain == [3]


def test_quotas_and_disjointness(rng):
    g = random_graph(rng, 50, 0.1)
    Y = rng.dirichlet(np.ones(3), 50)
    pool = np.arange(10, 50)
    res = select_informative(g, Y, pool, 7, 5)
    assert len(res.certain) == 7 and len(res.uncertain) == 5
    assert not set(res.certain) & set(res.uncertain)
    assert set(res.certain) | set(res.uncertain) <= set(pool.tolist())
    empty = select_informative(g, Y, pool, 0, 0)
    assert empty.certain == [] and empty.uncertain == []


def test_small_pool_truncates_with_warning(rng):
    g = random_graph(rng, 10, 0.3)
    Y = rng.dirichlet(np.ones(3), 10)
    res = select_informative(g, Y, [1, 2, 3], 2, 4)
    assert len(res.certain) == 2 and len(res.uncertain) == 1
    assert res.warnings


def test_negative_quota():
    with pytest.raises(ValueError):
        select_from_scores([0, 1], [0, 0], [0, 0], -1, 0)
