"""Push-on-change pre-loading driven by availability predictions.

At every timeslot the system may enable push mode for ``n`` currently
offline users. The predictive strategy picks the offline users most likely
to connect in the next slot; the baseline always picks the offline users
that were most available during the training window. A selection is a hit
when the user actually connects in the next slot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .trace import AvailabilityMatrix
from .dht import PredictionMatrix


def _top_offline(scores: np.ndarray, online_now, n: int) -> np.ndarray:
    """Indices of the n offline users with highest score; ties by user order."""
    if n < 0:
        raise DataError("selection size must be >= 0")
    online = np.asarray(online_now, dtype=bool)
    offline = np.flatnonzero(~online)
    if n == 0 or offline.size == 0:
        return np.empty(0, dtype=np.intp)
    ranked = offline[np.argsort(-scores[offline], kind="stable")]
    return ranked[: min(n, offline.size)]


def select_push_users(
    P: PredictionMatrix, online_now, n: int, next_slot: int
) -> np.ndarray:
    """The n offline users most likely to be online at ``next_slot``."""
    col = next_slot - P.start_slot
    if col < 0 or col >= P.n_slots:
        raise DataError(f"slot {next_slot} outside prediction window")
    return _top_offline(P.probs[:, col], online_now, n)


def select_baseline_users(train_avail: np.ndarray, online_now, n: int) -> np.ndarray:
    """The n offline users with highest training-period availability."""
    return _top_offline(np.asarray(train_avail, dtype=float), online_now, n)


@dataclass(frozen=True)
class PreloadRun:
    n_values: tuple
    hit_ratios: dict  # strategy -> array aligned with n_values
    hits: dict  # strategy -> (slots, n) hit counts
    selections: dict  # strategy -> (slots, n) selection counts
    capped: bool  # true when some slot had fewer offline users than max(n)


def simulate_preload(
    A_test: AvailabilityMatrix,
    P: PredictionMatrix,
    train_avail: np.ndarray,
    n_values,
    slots: range = None,
) -> PreloadRun:
    """Hit-ratio curves for the predictive and baseline strategies.

    For every slot t in the test window except the last, both strategies
    select among the users offline at t; a selection hits when the user is
    online at t+1. The curve point at n is total hits / total selections
    over all slots.
    """
    n_values = tuple(int(n) for n in n_values)
    if not n_values or min(n_values) < 0:
        raise DataError("n_values must be non-negative")
    if slots is None:
        slots = range(P.start_slot, P.start_slot + P.n_slots)
    A_test.check_range(slots)
    if len(slots) < 2:
        raise DataError("need at least two slots to score next-slot connections")
    # predictions must cover every "next slot" of the window
    if slots.start + 1 < P.start_slot or slots.stop > P.start_slot + P.n_slots:
        raise DataError("prediction window does not cover the test range shifted by one")
    if A_test.users != P.users:
        raise DataError("prediction matrix users do not match the test matrix")
    train_avail = np.asarray(train_avail, dtype=float)
    if train_avail.shape[0] != A_test.n_users:
        raise DataError("train_avail must have one entry per user")

    max_n = max(n_values)
    n_steps = len(slots) - 1
    hits = {s: np.zeros((n_steps, len(n_values)), dtype=np.int64) for s in ("predictive", "baseline")}
    sels = {s: np.zeros((n_steps, len(n_values)), dtype=np.int64) for s in ("predictive", "baseline")}
    capped = False

    for step, t in enumerate(range(slots.start, slots.stop - 1)):
        online = A_test.cells[:, t]
        connected_next = A_test.cells[:, t + 1]
        offline = np.flatnonzero(~online)
        if offline.size < max_n:
            capped = True
        if offline.size == 0:
            continue
        pred_scores = P.probs[:, t + 1 - P.start_slot]
        rankings = {
            "predictive": offline[np.argsort(-pred_scores[offline], kind="stable")],
            "baseline": offline[np.argsort(-train_avail[offline], kind="stable")],
        }
        for strategy, ranked in rankings.items():
            hit_prefix = np.cumsum(connected_next[ranked])
            for j, n in enumerate(n_values):
                take = min(n, ranked.size)
                sels[strategy][step, j] = take
                hits[strategy][step, j] = hit_prefix[take - 1] if take else 0

    ratios = {}
    for strategy in ("predictive", "baseline"):
        total_sel = sels[strategy].sum(axis=0)
        total_hit = hits[strategy].sum(axis=0)
        with np.errstate(invalid="ignore"):
            ratios[strategy] = np.where(total_sel > 0, total_hit / np.maximum(total_sel, 1), 0.0)
    return PreloadRun(
        n_values=n_values, hit_ratios=ratios, hits=hits, selections=sels, capped=capped
    )


def write_preload_csv(run: PreloadRun, path) -> None:
    """`strategy,n,hit_ratio` rows, predictive first."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "n", "hit_ratio"])
        for strategy in ("predictive", "baseline"):
            for n, ratio in zip(run.n_values, run.hit_ratios[strategy]):
                writer.writerow([strategy, n, f"{ratio:.10g}"])
