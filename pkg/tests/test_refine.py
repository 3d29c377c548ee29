import numpy as np
import pytest

from locle.annotate import Annotation
from locle.refine import ascending_ranks, refine_labels


def ann(v, label, conf):
    return Annotation(v, label, conf, "llm")


def test_ascending_ranks_ties_by_id():
    assert ascending_ranks([5, 2, 9], [0.3, 0.3, 0.1]) == {9: 1, 2: 2, 5: 3}


def test_rank_rule_keeps_more_confident_llm():
    # node 4: rank_llm 5 (most confident answer), rank_gnn 2 -> LLM kept
    nodes = [0, 1, 2, 3, 4]
    anns = [ann(0, 1, 10), ann(1, 1, 20), ann(2, 1, 30), ann(3, 1, 40), ann(4, 1, 95)]
    Y = np.array([[0.9, 0.1], [0.55, 0.45], [0.95, 0.05], [0.99, 0.01], [0.6, 0.4]])
    out = {r.node_id: r for r in refine_labels(nodes, anns, Y, phi_bar=0)}
    assert (out[4].rank_llm, out[4].rank_gnn) == (5, 2)
    assert out[4].label == 1 and out[4].source == "llm"
    # node 0 is the least confident LLM answer but a mid-ranked GNN one
    assert out[0].source == "gnn_refined" and out[0].label == 0


def test_threshold_rank_mode():
    nodes = [0, 1, 2, 3]
    anns = [ann(v, 1, 90 + v) for v in nodes]
    Y = np.full((4, 2), 0.5)
    Y[:, 0] += np.array([0.01, 0.02, 0.03, 0.04])
    Y[:, 1] = 1 - Y[:, 0]
    out = refine_labels(nodes, anns, Y, phi_bar=3)
    assert [r.source for r in out] == ["gnn_refined"] * 3 + ["llm"]


def test_threshold_score_mode():
    anns = [ann(0, 1, 2.0), ann(1, 1, 80.0)]
    Y = np.array([[0.9, 0.1], [0.9, 0.1]])
    out = refine_labels([0, 1], anns, Y, phi_bar=3, mode="score")
    assert out[0].source == "gnn_refined" and out[0].label == 0
    assert out[1].source == "llm"


def test_failed_annotation_falls_back():
    Y = np.array([[0.2, 0.8]])
    out = refine_labels([0], [Annotation(0, None, 0.0, "llm")], Y, phi_bar=-1)
    assert out[0].label == 1 and out[0].source == "gnn_refined"


def test_boundaries(rng):
    nodes = list(range(20))
    anns = [ann(v, int(rng.integers(3)), float(rng.uniform(0, 100))) for v in nodes]
    Y = rng.dirichlet(np.ones(3), 20)
    all_gnn = refine_labels(nodes, anns, Y, phi_bar=101, mode="score")
    assert all(r.source == "gnn_refined" for r in all_gnn)
    # identical LLM and GNN confidence orderings make rank_llm == rank_gnn everywhere
    conf = Y.max(1)
    anns2 = [ann(v, a.label, float(100 * conf[v])) for v, a in zip(nodes, anns)]
    all_llm = refine_labels(nodes, anns2, Y, phi_bar=-1)
    assert all(r.source == "llm" for r in all_llm)
    assert sorted(r.node_id for r in all_llm) == nodes


def test_missing_prediction_row():
    with pytest.raises(KeyError):
        refine_labels([5], [ann(5, 0, 50)], np.ones((3, 2)) / 2, phi_bar=0)


def test_invert_ranks():
    anns = [ann(0, 1, 10), ann(1, 1, 90)]
    Y = np.array([[0.9, 0.1], [0.6, 0.4]])
    plain = refine_labels([0, 1], anns, Y, phi_bar=0)
    flipped = refine_labels([0, 1], anns, Y, phi_bar=0, invert_ranks=True)
    assert [r.rank_llm for r in plain] == [1, 2]
    assert [r.rank_llm for r in flipped] == [2, 1]
