"""Percentile labels, average precision and Kendall's tau-b."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels


class DegenerateLabelsError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdedLabels:
    labels: np.ndarray
    percentile: float
    threshold_value: float


def nearest_rank_percentile(y, p):
    y = np.sort(np.asarray(y, dtype=float))
    rank = max(1, math.ceil(p / 100.0 * y.size))
    return float(y[rank - 1])


def threshold_labels(y, p):
    """Label ``y_i > percentile_p(y)`` as positive (nearest-rank percentile).

    Values equal to the threshold are negatives.
    """
    y = np.asarray(y, dtype=float)
    if not 0 < p < 100:
        raise ValueError(f"percentile must be in (0, 100), got {p}")
    if y.size < 2:
        raise DegenerateLabelsError("need at least two values")
    thr = nearest_rank_percentile(y, p)
    labels = (y > thr).astype(np.int8)
    if labels.all() or not labels.any():
        raise DegenerateLabelsError(f"threshold at percentile {p} leaves one class empty")
    return ThresholdedLabels(labels, float(p), thr)


def auprc(scores, labels):
    """Average precision, ``sum_k (R_k - R_{k-1}) P_k``.

    Operating points are the distinct score values in descending order, so
    tied scores enter together and the result does not depend on input order.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D of equal length")
    positives = int(np.count_nonzero(labels))
    if positives == 0 or positives == labels.size:
        raise DegenerateLabelsError("both classes must be present")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    hits = (labels[order] != 0).astype(np.int64)
    tp = np.cumsum(hits)
    # last index of every run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = tp[ends]
    precision = tp / (ends + 1)
    # recall steps are new_hits / positives; dividing once keeps a perfect ranking at exactly 1
    new_hits = np.diff(tp, prepend=0)
    return float(np.sum(new_hits * precision) / positives)


def _tied_pairs(same):
    """Tied pairs given ``same[i] = (v[i+1] == v[i])`` for a grouped array."""
    breaks = np.flatnonzero(~same) + 1
    lengths = np.diff(np.concatenate(([0], breaks, [same.size + 1])))
    return int(np.sum(lengths * (lengths - 1) // 2))


def _tau_counts(x, y):
    """Integer pieces of tau-b: ``(C - D, n0 - n1, n0 - n2)``."""
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    same_x = xs[1:] == xs[:-1]
    n1 = _tied_pairs(same_x)
    joint = _tied_pairs(same_x & (ys[1:] == ys[:-1]))
    ys = np.ascontiguousarray(ys)
    swaps = _kernels.count_inversions(ys)
    n2 = _kernels.tie_pairs(ys)
    # C + D = n0 - n1 - n2 + joint, D = swaps
    return n0 - n1 - n2 + joint - 2 * swaps, n0 - n1, n0 - n2


def kendall_tau(y_true, y_pred):
    """Kendall's tau-b in O(n log n) via merge-sort inversion counting."""
    x = np.asarray(y_true, dtype=float)
    y = np.asarray(y_pred, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D of equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    num, den_x, den_y = _tau_counts(x, y)
    if den_x == 0 or den_y == 0:
        raise DegenerateLabelsError("tau-b undefined: one side is entirely tied")
    return num / math.sqrt(den_x * den_y)
