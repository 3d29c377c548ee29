import json

import numpy as np
import pytest

from conftest import random_graph
from reference_metrics import ari_pairs, nmi_counts
from locle.evalio import (
    Dataset, DatasetError, accuracy, all_metrics, ari, load_dataset, macro_f1, nmi, read_label_csv,
    write_dataset, write_predictions, write_report,
)


def test_accuracy_and_f1_worked_example():
    truth, pred = [0, 0, 1, 1], [0, 1, 1, 1]
    assert accuracy(pred, truth) == 0.75
    assert macro_f1(pred, truth) == pytest.approx((2 / 3 + 4 / 5) / 2)
    assert macro_f1(truth, truth) == 1.0
    # class 2 absent from both contributes a zero
    assert macro_f1(truth, truth, k=3) == pytest.approx(2 / 3)


def test_accuracy_and_f1_not_permutation_invariant():
    truth = np.array([0, 0, 1, 1, 2])
    perm = np.array([1, 2, 0])[truth]
    assert accuracy(perm, truth) == 0.0
    assert macro_f1(perm, truth) == 0.0


def test_nmi_examples():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)
    assert nmi([3, 3, 3, 3], [0, 1, 0, 1]) == 0.0
    assert nmi([0, 0, 0], [1, 1, 1]) == 1.0
    assert nmi([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(nmi_counts([0, 1, 0, 1], [0, 0, 1, 1]), abs=1e-12)


def test_ari_examples():
    assert ari([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert ari([5, 5, 7, 7], [0, 0, 1, 1]) == 1.0
    assert ari([0, 1, 1, 1], [0, 0, 1, 1]) == pytest.approx(ari_pairs([0, 1, 1, 1], [0, 0, 1, 1]), abs=1e-12)


def test_metric_oracles_random(rng):
    for _ in range(200):
        n = int(rng.integers(1, 13))
        pred = rng.integers(0, int(rng.integers(1, 5)), n).tolist()
        truth = rng.integers(0, int(rng.integers(1, 5)), n).tolist()
        assert nmi(pred, truth) == pytest.approx(nmi_counts(pred, truth), abs=1e-12)
        assert ari(pred, truth) == pytest.approx(ari_pairs(pred, truth), abs=1e-12)
        perm = rng.permutation(10)
        relabeled = [int(perm[p]) for p in pred]
        assert ari(relabeled, truth) == pytest.approx(ari(pred, truth), abs=1e-12)
        assert nmi(relabeled, truth) == pytest.approx(nmi(pred, truth), abs=1e-12)


def test_metric_errors():
    for f in (accuracy, nmi, ari):
        with pytest.raises(ValueError):
            f([], [])
    with pytest.raises(ValueError):
        accuracy([0, 1], [0])


def make_dataset(rng, n=30):
    g = random_graph(rng, n, 0.15)
    return Dataset(g, rng.standard_normal((n, 4)), ["a", "b", "c"],
                   [f"text {i}" for i in range(n)], rng.integers(0, 3, n))


@pytest.mark.parametrize("binary", [False, True])
def test_dataset_roundtrip(tmp_path, rng, binary):
    ds = make_dataset(rng)
    write_dataset(ds, tmp_path, binary_features=binary)
    back = load_dataset(tmp_path)
    assert back.graph.edge_set() == ds.graph.edge_set()
    tol = 1e-6 if binary else 1e-9
    assert np.allclose(back.features, ds.features, atol=tol * 10)
    assert back.class_names == ds.class_names and back.texts == ds.texts
    assert np.array_equal(back.ground_truth, ds.ground_truth)


def test_dataset_errors_name_the_line(tmp_path, rng):
    ds = make_dataset(rng)
    write_dataset(ds, tmp_path)
    edges = tmp_path / "edges.csv"
    first = edges.read_text().splitlines()[0]
    edges.write_text(edges.read_text() + first + "\n")
    with pytest.raises(DatasetError, match=r"edges.csv:\d+: duplicate"):
        load_dataset(tmp_path)
    edges.write_text("0,0\n")
    with pytest.raises(DatasetError, match="edges.csv:1: self-loop"):
        load_dataset(tmp_path)
    edges.write_text("0,99\n")
    with pytest.raises(DatasetError, match="out of range"):
        load_dataset(tmp_path)


def test_feature_errors(tmp_path, rng):
    ds = make_dataset(rng)
    write_dataset(ds, tmp_path)
    (tmp_path / "features.csv").write_text("1,2\n3\n")
    with pytest.raises(DatasetError, match="features.csv:2"):
        load_dataset(tmp_path)
    (tmp_path / "features.csv").unlink()
    (tmp_path / "features.bin").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(DatasetError, match="magic"):
        load_dataset(tmp_path)


def test_label_csv_and_outputs(tmp_path):
    write_predictions([2, 0, 1], tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text() == "node,label\n0,2\n1,0\n2,1\n"
    assert read_label_csv(tmp_path / "p.csv") == {0: 2, 1: 0, 2: 1}
    with pytest.raises(DatasetError, match="out of range"):
        read_label_csv(tmp_path / "p.csv", n=3, k=2)
    write_report({"b": 1, "a": [1.5]}, tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text()) == {"a": [1.5], "b": 1}


def test_all_metrics_perfect():
    m = all_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert m == {"accuracy": 1.0, "nmi": 1.0, "ari": 1.0, "f1": 1.0}
