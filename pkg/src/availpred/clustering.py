"""k-means clustering of one-week availability rows.

Lloyd iterations with k-means++ seeding on the raw 0/1 rows. Centroids are
per-cluster mean availability curves, so they stay in [0, 1] and can be read
as "expected fraction of the cluster online at each slot of the week".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import substream
from .trace import AvailabilityMatrix

DEFAULT_K = 4
DEFAULT_RESTARTS = 10
MAX_LLOYD_ITER = 300


@dataclass(frozen=True)
class ClusterResult:
    assignments: dict  # user_id -> cluster id
    centroids: np.ndarray  # (k, slots)
    sizes: tuple
    inertia: float
    inertia_history: tuple  # winning restart, one value per Lloyd iteration


def _kmeanspp_init(rows: np.ndarray, k: int, rng) -> np.ndarray:
    n = rows.shape[0]
    centroids = np.empty((k, rows.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = rows[first]
    d2 = ((rows - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))  # all points coincide with chosen centroids
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = rows[idx]
        d2 = np.minimum(d2, ((rows - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(rows: np.ndarray, centroids: np.ndarray):
    history = []
    assign = None
    for _ in range(MAX_LLOYD_ITER):
        d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(rows.shape[0]), new_assign].sum())
        history.append(inertia)
        for j in range(centroids.shape[0]):
            members = rows[new_assign == j]
            if len(members) == 0:
                # re-seed an emptied centroid from the farthest point
                far = int(d2.min(axis=1).argmax())
                centroids[j] = rows[far]
                new_assign[far] = j
                members = rows[new_assign == j]
            centroids[j] = members.mean(axis=0)
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
    # final stats at converged centroids
    d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(rows.shape[0]), assign].sum())
    history.append(inertia)
    return assign, centroids, inertia, history


def kmeans_availability(
    m: AvailabilityMatrix,
    slots: range,
    k: int = DEFAULT_K,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
) -> ClusterResult:
    """Cluster users by their availability curve over one week of slots.

    Runs ``restarts`` independent k-means++ initializations and keeps the
    lowest-inertia result (ties broken by restart index). Cluster ids are
    relabeled by decreasing size, then by smallest member row, so output is
    stable for a fixed seed.
    """
    m.check_range(slots)
    if len(slots) != m.slots_per_week:
        raise DataError(f"clustering range must cover one week ({m.slots_per_week} slots)")
    if k < 1 or k > m.n_users:
        raise DataError(f"k={k} must be between 1 and the user count {m.n_users}")
    rows = m.cells[:, slots.start : slots.stop].astype(float)

    best = None
    for r in range(restarts):
        rng = substream(seed, "kmeans-restart", r)
        centroids = _kmeanspp_init(rows, k, rng)
        assign, centroids, inertia, history = _lloyd(rows, centroids.copy())
        if best is None or inertia < best[0]:
            best = (inertia, assign, centroids, history)
    inertia, assign, centroids, history = best

    # stable relabeling: big clusters first, ties by first member row
    sizes = np.bincount(assign, minlength=k)
    first_member = np.array(
        [int(np.argmax(assign == j)) if sizes[j] else m.n_users for j in range(k)]
    )
    order = sorted(range(k), key=lambda j: (-sizes[j], first_member[j]))
    relabel = {old: new for new, old in enumerate(order)}
    assign = np.array([relabel[int(a)] for a in assign])
    centroids = centroids[order]
    sizes = tuple(int(c) for c in np.bincount(assign, minlength=k))

    assignments = {user: int(cid) for user, cid in zip(m.users, assign)}
    return ClusterResult(
        assignments=assignments,
        centroids=centroids,
        sizes=sizes,
        inertia=inertia,
        inertia_history=tuple(history),
    )


def write_clusters_csv(result: ClusterResult, path) -> None:
    """One line per cluster: id, size, then the centroid curve."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cluster_id", "size", "centroid..."])
        for cid, (size, curve) in enumerate(zip(result.sizes, result.centroids)):
            writer.writerow([cid, size] + [f"{v:.6f}" for v in curve])
