"""Dataset files, evaluation metrics and result files.

Dataset directory layout::

    edges.csv      "i,j" per line, no header
    features.csv   n rows of d floats, no header   (or features.bin)
    classes.txt    one class name per line
    labels.csv     optional "node,label" lines
    texts.jsonl    optional {"node_id": int, "text": str} lines

``features.bin`` is the magic ``LOCF``, u32 n, u32 d, then n*d little-endian
float32 values in row-major order.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph_core import Graph

FEATURE_MAGIC = b"LOCF"


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    class_names: list[str]
    texts: list[str] | None = None
    ground_truth: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def _rows(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if row and any(c.strip() for c in row):
                yield lineno, row


def _int(path, lineno, s):
    try:
        return int(s.strip())
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: expected an integer, got {s!r}") from None


def read_features(directory: Path) -> np.ndarray:
    binf, csvf = directory / "features.bin", directory / "features.csv"
    if binf.exists():
        buf = binf.read_bytes()
        if buf[:4] != FEATURE_MAGIC:
            raise DatasetError(f"{binf}: bad magic {buf[:4]!r}, expected {FEATURE_MAGIC!r}")
        if len(buf) < 12:
            raise DatasetError(f"{binf}: truncated header")
        n, d = struct.unpack_from("<II", buf, 4)
        if len(buf) != 12 + 4 * n * d:
            raise DatasetError(f"{binf}: expected {n}x{d} float32 values, file size is {len(buf)}")
        X = np.frombuffer(buf, dtype="<f4", offset=12, count=n * d).reshape(n, d)
        X = X.astype(np.float64)
    elif csvf.exists():
        rows = []
        width = None
        for lineno, row in _rows(csvf):
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DatasetError(f"{csvf}:{lineno}: non-numeric feature value") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DatasetError(f"{csvf}:{lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
        if not rows:
            raise DatasetError(f"{csvf}: no feature rows")
        X = np.array(rows, dtype=np.float64)
    else:
        raise DatasetError(f"{directory}: missing features.csv or features.bin")
    if not np.all(np.isfinite(X)):
        raise DatasetError("feature matrix contains non-finite values")
    return X


def read_edges(path: Path, n: int) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"missing {path}")
    seen = {}
    edges = []
    for lineno, row in _rows(path):
        if len(row) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        i, j = (_int(path, lineno, c) for c in row)
        for v in (i, j):
            if not 0 <= v < n:
                raise DatasetError(f"{path}:{lineno}: node id {v} out of range [0, {n})")
        if i == j:
            raise DatasetError(f"{path}:{lineno}: self-loop on node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate edge {key} (first at line {seen[key]})")
        seen[key] = lineno
        edges.append(key)
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def read_label_csv(path, n: int | None = None, k: int | None = None) -> dict[int, int]:
    """``node,label`` rows; a non-numeric first line is taken as a header."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing {path}")
    out = {}
    for lineno, row in _rows(path):
        if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
            continue
        if len(row) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        node, label = (_int(path, lineno, c) for c in row)
        if n is not None and not 0 <= node < n:
            raise DatasetError(f"{path}:{lineno}: node id {node} out of range [0, {n})")
        if k is not None and not 0 <= label < k:
            raise DatasetError(f"{path}:{lineno}: label {label} out of range [0, {k})")
        if node in out:
            raise DatasetError(f"{path}:{lineno}: node {node} listed twice")
        out[node] = label
    return out


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"{directory}: not a directory")
    X = read_features(directory)
    n = X.shape[0]
    classes_path = directory / "classes.txt"
    if not classes_path.exists():
        raise DatasetError(f"missing {classes_path}")
    names = [ln.strip() for ln in classes_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not names:
        raise DatasetError(f"{classes_path}: no class names")
    if len(set(names)) != len(names):
        raise DatasetError(f"{classes_path}: duplicate class names")
    graph = Graph.from_edges(n, read_edges(directory / "edges.csv", n))
    truth = None
    if (directory / "labels.csv").exists():
        labels = read_label_csv(directory / "labels.csv", n, len(names))
        missing = sorted(set(range(n)) - labels.keys())
        if missing:
            raise DatasetError(f"{directory / 'labels.csv'}: no label for node {missing[0]}")
        truth = np.array([labels[i] for i in range(n)], dtype=np.int64)
    texts = None
    tpath = directory / "texts.jsonl"
    if tpath.exists():
        texts = [""] * n
        with open(tpath, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    node, text = int(rec["node_id"]), str(rec["text"])
                except (ValueError, KeyError, TypeError):
                    raise DatasetError(f"{tpath}:{lineno}: bad record") from None
                if not 0 <= node < n:
                    raise DatasetError(f"{tpath}:{lineno}: node id {node} out of range [0, {n})")
                texts[node] = text
    return Dataset(graph, X, names, texts, truth)


def write_dataset(ds: Dataset, directory, binary_features: bool = False) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "edges.csv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{i},{j}\n" for i, j in ds.graph.edges)
    if binary_features:
        X = np.ascontiguousarray(ds.features, dtype="<f4")
        (directory / "features.bin").write_bytes(FEATURE_MAGIC + struct.pack("<II", *X.shape) + X.tobytes())
    else:
        np.savetxt(directory / "features.csv", ds.features, delimiter=",", fmt="%.10g")
    (directory / "classes.txt").write_text("\n".join(ds.class_names) + "\n", encoding="utf-8")
    if ds.ground_truth is not None:
        write_predictions(ds.ground_truth, directory / "labels.csv")
    if ds.texts is not None:
        with open(directory / "texts.jsonl", "w", encoding="utf-8") as fh:
            for i, t in enumerate(ds.texts):
                fh.write(json.dumps({"node_id": i, "text": t}) + "\n")


def write_predictions(labels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("node,label\n")
        fh.writelines(f"{i},{int(y)}\n" for i, y in enumerate(labels))


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- metrics


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {truth.size} labels")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.mean(pred == truth))


def macro_f1(pred, truth, k: int | None = None) -> float:
    """Unweighted mean of per-class F1 over ``k`` classes; a class with no
    predictions and no true members scores 0."""
    pred, truth = _pair(pred, truth)
    if k is None:
        k = int(max(pred.max(initial=-1), truth.max(initial=-1))) + 1
    if k <= 0:
        raise ValueError("need at least one class")
    scores = []
    for c in range(k):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def contingency(pred, truth) -> np.ndarray:
    pred, truth = _pair(pred, truth)
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max(initial=-1) + 1, ti.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information over the geometric mean of the two entropies."""
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise ValueError("empty input")
    table = contingency(pred, truth)
    n = table.sum()
    hp, ht = _entropy(table.sum(1)), _entropy(table.sum(0))
    if hp == 0 and ht == 0:
        return 1.0
    if hp == 0 or ht == 0:
        return 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(1), table.sum(0))[nz] / (n * n)
    mi = float(np.sum(pij * np.log(pij / outer)))
    return min(max(mi / math.sqrt(hp * ht), 0.0), 1.0)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise ValueError("empty input")
    table = contingency(pred, truth)
    n = table.sum()
    index = float(_comb2(table).sum())
    a = float(_comb2(table.sum(1)).sum())
    b = float(_comb2(table.sum(0)).sum())
    total = float(_comb2(n))
    expected = a * b / total if total else 0.0
    max_index = (a + b) / 2.0
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def all_metrics(pred, truth, k: int | None = None) -> dict[str, float]:
    return {
        "accuracy": accuracy(pred, truth),
        "nmi": nmi(pred, truth),
        "ari": ari(pred, truth),
        "f1": macro_f1(pred, truth, k),
    }
