"""Classifier quality metrics: AUC, geometric-mean likelihood, ROC, time series."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DataError

GM_EPS = 1.0e-12


@dataclass(frozen=True)
class ScoredLabels:
    """Paired (binary label, predicted probability), optionally with slot indices."""

    labels: np.ndarray
    probs: np.ndarray
    slots: np.ndarray = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        probs = np.asarray(self.probs, dtype=float)
        if labels.shape != probs.shape or labels.ndim != 1:
            raise DataError("labels and probs must be 1-D and the same length")
        if labels.size == 0:
            raise DataError("ScoredLabels must be non-empty")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise DataError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "labels", labels.astype(np.uint8))
        object.__setattr__(self, "probs", probs)
        if self.slots is not None:
            slots = np.asarray(self.slots, dtype=np.int64)
            if slots.shape != probs.shape:
                raise DataError("slots must match labels in length")
            object.__setattr__(self, "slots", slots)

    def __len__(self) -> int:
        return int(self.labels.size)


def _require_both_classes(labels: np.ndarray, what: str):
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise DataError(f"{what} undefined: input contains a single class")
    return n_pos, labels.size - n_pos


def auc(s: ScoredLabels) -> float:
    """Probability a random positive outranks a random negative, ties at 1/2.

    Computed from midranks (Mann-Whitney), which is exactly the exhaustive
    pairwise comparison.
    """
    n_pos, n_neg = _require_both_classes(s.labels, "auc")
    ranks = rankdata(s.probs, method="average")
    u = ranks[s.labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def gm(s: ScoredLabels) -> float:
    """Geometric mean of the predicted likelihood of each observed label.

    Likelihoods are clamped to [1e-12, 1 - 1e-12] before the log so a single
    saturated wrong prediction cannot drive the metric to exactly zero.
    """
    lik = np.where(s.labels == 1, s.probs, 1.0 - s.probs)
    lik = np.clip(lik, GM_EPS, 1.0 - GM_EPS)
    return float(np.exp(np.mean(np.log(lik))))


def class_accuracy(s: ScoredLabels, threshold: float = 0.5):
    """(overall, positive-class, negative-class) accuracy at a cut.

    A user-slot is predicted online when the probability exceeds the
    threshold. Class accuracies are NaN when the class is absent.
    """
    predicted = s.probs > threshold
    actual = s.labels == 1
    overall = float((predicted == actual).mean())
    pos = float((predicted[actual]).mean()) if actual.any() else float("nan")
    neg = float((~predicted[~actual]).mean()) if (~actual).any() else float("nan")
    return overall, pos, neg


def roc_points(s: ScoredLabels) -> np.ndarray:
    """(false positive rate, true positive rate) pairs from a threshold sweep.

    One point per distinct score plus the (0, 0) anchor; the last point is
    always (1, 1). The trapezoid area over these points equals ``auc``.
    """
    n_pos, n_neg = _require_both_classes(s.labels, "roc")
    order = np.argsort(-s.probs, kind="stable")
    sorted_probs = s.probs[order]
    sorted_labels = s.labels[order]
    tp = np.cumsum(sorted_labels == 1)
    fp = np.cumsum(sorted_labels == 0)
    # keep only the last index of each tie group
    boundary = np.r_[sorted_probs[1:] != sorted_probs[:-1], True]
    points = np.column_stack([fp[boundary] / n_neg, tp[boundary] / n_pos])
    return np.vstack([[0.0, 0.0], points])


def trapezoid_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def metric_over_time(s: ScoredLabels, window_slots: int, metric: str):
    """Sliding-window metric values, trailing windows, stride one slot.

    Returns (window-end slots, values). AUC windows containing a single
    class are omitted; GM is defined whenever the window holds data.
    """
    if s.slots is None:
        raise DataError("metric_over_time needs per-pair slot indices")
    if window_slots < 1:
        raise DataError("window must cover at least one slot")
    if metric not in ("auc", "gm"):
        raise DataError(f"unknown metric {metric!r}")

    order = np.argsort(s.slots, kind="stable")
    slots = s.slots[order]
    labels = s.labels[order]
    probs = s.probs[order]
    lo, hi = int(slots[0]), int(slots[-1])

    out_slots, out_values = [], []
    left = right = 0
    n = slots.size
    for end in range(lo + window_slots - 1, hi + 1):
        start = end - window_slots + 1
        while left < n and slots[left] < start:
            left += 1
        while right < n and slots[right] <= end:
            right += 1
        if right <= left:
            continue
        w_labels = labels[left:right]
        w_probs = probs[left:right]
        if metric == "auc":
            n_pos = int(w_labels.sum())
            if n_pos == 0 or n_pos == w_labels.size:
                continue
            value = auc(ScoredLabels(w_labels, w_probs))
        else:
            value = gm(ScoredLabels(w_labels, w_probs))
        out_slots.append(end)
        out_values.append(value)
    return np.array(out_slots, dtype=np.int64), np.array(out_values)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def write_metric_report(rows, path) -> None:
    """Rows of (metric, scope, value) to `metric,scope,value` CSV."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "scope", "value"])
        for metric, scope, value in rows:
            writer.writerow([metric, scope, f"{value:.10g}"])


def write_xy_csv(xs, ys, path, header=("x", "y")) -> None:
    """Two-column CSV for ROC curves and metric time series."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for x, y in zip(xs, ys):
            writer.writerow([f"{x:.10g}", f"{y:.10g}"])
