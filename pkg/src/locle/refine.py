"""Arbitration between LLM annotations and rewired-GNN predictions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotate import Annotation


@dataclass(frozen=True)
class RefinedLabel:
    node_id: int
    label: int
    source: str  # "llm" or "gnn_refined"
    rank_llm: int
    rank_gnn: int


def ascending_ranks(nodes, values) -> dict[int, int]:
    """1-based rank of each node by ascending value, ties by node id."""
    nodes = np.asarray(nodes, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((nodes, values))
    return {int(nodes[j]): pos + 1 for pos, j in enumerate(order)}


def refine_labels(uncertain, annotations, Y_hat, phi_bar: float, *,
                  mode: str = "rank", invert_ranks: bool = False) -> list[RefinedLabel]:
    """Pick a final label per uncertain node.

    The GNN label (argmax of ``Y_hat``) wins when the annotation failed, when
    the node ranks lower on LLM confidence than on GNN confidence, or when the
    LLM answer falls under the trust threshold. In ``"rank"`` mode the
    threshold reads as "among the ``phi_bar`` least confident answers"; in
    ``"score"`` mode it is compared to the raw confidence.
    """
    if mode not in ("rank", "score"):
        raise ValueError(f"mode must be 'rank' or 'score', got {mode!r}")
    nodes = sorted(int(v) for v in uncertain)
    if not nodes:
        return []
    ann = annotations if isinstance(annotations, dict) else {a.node_id: a for a in annotations}
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    missing = [v for v in nodes if v >= Y_hat.shape[0]]
    if missing:
        raise KeyError(f"no prediction row for node {missing[0]}")
    phi = []
    for v in nodes:
        a: Annotation | None = ann.get(v)
        phi.append(0.0 if a is None or a.failed else a.confidence)
    gnn_conf = Y_hat[nodes].max(axis=1)
    sign = -1.0 if invert_ranks else 1.0
    r_llm = ascending_ranks(nodes, sign * np.asarray(phi))
    r_gnn = ascending_ranks(nodes, sign * gnn_conf)
    out = []
    for v, p in zip(nodes, phi):
        a = ann.get(v)
        y_gnn = int(np.argmax(Y_hat[v]))
        below = r_llm[v] <= phi_bar if mode == "rank" else p <= phi_bar
        if a is None or a.failed or r_llm[v] < r_gnn[v] or below:
            out.append(RefinedLabel(v, y_gnn, "gnn_refined", r_llm[v], r_gnn[v]))
        else:
            out.append(RefinedLabel(v, int(a.label), "llm", r_llm[v], r_gnn[v]))
    return out
