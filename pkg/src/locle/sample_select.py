"""Label entropy, label disharmonicity and the certain/uncertain node sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph_core import Graph

SIGMA = 1e-9


@dataclass
class SelectionResult:
    certain: list[int]
    uncertain: list[int]
    entropy: dict[int, float]
    disharmonicity: dict[int, float]
    warnings: list[str] = field(default_factory=list)


def label_entropy_all(Ybar, sigma: float = SIGMA) -> np.ndarray:
    """``-sum_j p_j log(p_j + sigma)`` per row, floored at 0.

    The smoothing term makes a one-hot row come out at ``-log(1 + sigma)``;
    the floor keeps the score nonnegative.
    """
    Ybar = np.asarray(Ybar, dtype=np.float64)
    return np.maximum(-np.sum(Ybar * np.log(Ybar + sigma), axis=1), 0.0)


def label_entropy(Ybar, i: int, sigma: float = SIGMA) -> float:
    row = np.asarray(Ybar, dtype=np.float64)[i]
    return max(float(-np.sum(row * np.log(row + sigma))), 0.0)


def label_disharmonicity_all(g: Graph, Ybar) -> np.ndarray:
    """Distance of each row of ``Ybar`` from the mean of its neighbors' rows.

    Neighbors are counted, not weighted. Isolated nodes score 0.
    """
    Ybar = np.asarray(Ybar, dtype=np.float64)
    a = g.adjacency.copy()
    a.data[:] = 1.0
    deg = np.asarray(a.sum(axis=1)).ravel()
    nbr_sum = a @ Ybar
    out = np.zeros(g.n)
    has = deg > 0
    diff = Ybar[has] - nbr_sum[has] / deg[has, None]
    out[has] = np.sqrt(np.sum(diff * diff, axis=1))
    return out


def label_disharmonicity(g: Graph, Ybar, i: int) -> float:
    nbrs = g.neighbors(i)
    if len(nbrs) == 0:
        return 0.0
    Ybar = np.asarray(Ybar, dtype=np.float64)
    return float(np.linalg.norm(Ybar[i] - Ybar[nbrs].mean(axis=0)))


def _rank(nodes: np.ndarray, score: np.ndarray, largest: bool) -> np.ndarray:
    """Nodes ordered best-first by score, ties by smallest id."""
    key = -score if largest else score
    return nodes[np.lexsort((nodes, key))]


def _combine(nodes, lh, le, q, largest):
    """Build one set of size ``min(q, len(nodes))`` from the two top-q lists."""
    q = min(q, len(nodes))
    if q == 0:
        return []
    by_lh = _rank(nodes, lh, largest)
    by_le = _rank(nodes, le, largest)
    s_har, s_ent = by_lh[:q], by_le[:q]
    set_har, set_ent = set(s_har.tolist()), set(s_ent.tolist())
    both = set_har & set_ent
    rest = q - len(both)
    take_lh = math.ceil(rest / 2)
    take_le = rest // 2
    only_har = [v for v in s_har.tolist() if v not in set_ent][:take_lh]
    only_ent = [v for v in s_ent.tolist() if v not in set_har][:take_le]
    return sorted(both | set(only_har) | set(only_ent))


def select_from_scores(pool, lh, le, quota_certain: int, quota_uncertain: int):
    """Set algebra on precomputed scores; returns ``(certain, uncertain, warnings)``."""
    if quota_certain < 0 or quota_uncertain < 0:
        raise ValueError("quotas must be nonnegative")
    pool = np.asarray(pool, dtype=np.int64)
    lh = np.asarray(lh, dtype=np.float64)
    le = np.asarray(le, dtype=np.float64)
    if len(np.unique(pool)) != len(pool):
        raise ValueError("pool has repeated nodes")
    warnings = []
    if quota_certain > len(pool):
        warnings.append(f"certain quota {quota_certain} exceeds pool of {len(pool)}")
    certain = _combine(pool, lh, le, quota_certain, largest=False)
    uncertain = _combine(pool, lh, le, quota_uncertain, largest=True)
    if set(certain) & set(uncertain):
        keep = ~np.isin(pool, certain)
        uncertain = _combine(pool[keep], lh[keep], le[keep], quota_uncertain, largest=True)
    if len(uncertain) < quota_uncertain:
        warnings.append(f"uncertain quota {quota_uncertain} truncated to {len(uncertain)}")
    return certain, uncertain, warnings


def select_informative(g: Graph, Ybar, pool, quota_certain: int, quota_uncertain: int,
                       ) -> SelectionResult:
    """Pick the most certain and most uncertain nodes of ``pool``.

    Certain nodes have small disharmonicity and small entropy; uncertain ones
    large values of both. If the uncertain set would overlap the certain set,
    it is recomputed on the pool without the certain nodes.
    """
    pool = np.array(sorted({int(v) for v in pool}), dtype=np.int64)
    le = label_entropy_all(Ybar)[pool]
    lh = label_disharmonicity_all(g, Ybar)[pool]
    certain, uncertain, warnings = select_from_scores(pool, lh, le, quota_certain, quota_uncertain)
    return SelectionResult(
        certain=certain,
        uncertain=uncertain,
        entropy={int(v): float(x) for v, x in zip(pool, le)},
        disharmonicity={int(v): float(x) for v, x in zip(pool, lh)},
        warnings=warnings,
    )
