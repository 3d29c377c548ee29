"""Slow reference for the certain/uncertain set algebra.

Top-q membership is decided by counting, for each node, how many pool nodes
beat it (better score, or equal score and smaller id); no sorting is used.
"""
import math


def beats(a, b, score, largest):
    sa, sb = score[a], score[b]
    if sa != sb:
        return sa > sb if largest else sa < sb
    return a < b


def top(nodes, score, q, largest):
    return {v for v in nodes if sum(beats(u, v, score, largest) for u in nodes if u != v) < q}


def build(nodes, lh, le, q, largest):
    q = min(q, len(nodes))
    s_har = top(nodes, lh, q, largest)
    s_ent = top(nodes, le, q, largest)
    both = s_har & s_ent
    rest = q - len(both)
    extra_h = top(sorted(s_har - s_ent), lh, math.ceil(rest / 2), largest)
    extra_e = top(sorted(s_ent - s_har), le, rest // 2, largest)
    return both | extra_h | extra_e


def reference_select(pool, lh, le, qc, qu):
    """``lh``/``le`` map node -> score."""
    pool = sorted(pool)
    certain = build(pool, lh, le, qc, largest=False)
    uncertain = build(pool, lh, le, qu, largest=True)
    if certain & uncertain:
        uncertain = build([v for v in pool if v not in certain], lh, le, qu, largest=True)
    return certain, uncertain
