"""Ring-placement optimization for replicated storage on a DHT.

Nodes sit on a logical ring; each ring position defines a neighbor set of
``n`` consecutive nodes that jointly hold one replica group. Under the
independence assumption, the predicted availability of a set over a window
of future slots is the mean over slots of 1 - prod(1 - p). The optimizer
permutes ring positions by repeated pairwise swaps, committing a swap when
it raises the summed predicted availability of the two nodes' neighbor
sets (which, because sets containing both nodes are unaffected by the
swap, is exactly when it raises the global ring objective).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import substream
from .trace import AvailabilityMatrix

DEFAULT_SWEEPS = 1000


@dataclass(frozen=True)
class PredictionMatrix:
    """Per-user probability of being online, one column per future slot."""

    users: tuple
    probs: np.ndarray  # (users, slots) in [0, 1]
    start_slot: int  # absolute index of column 0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] != len(self.users):
            raise DataError("probs must be (users, slots)")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise DataError("probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_slots(self) -> int:
        return self.probs.shape[1]

    def columns(self, slots: range = None) -> np.ndarray:
        """Column indices for an absolute slot range (default: all columns)."""
        if slots is None:
            return np.arange(self.n_slots)
        cols = np.arange(slots.start - self.start_slot, slots.stop - self.start_slot)
        if len(cols) == 0:
            raise DataError("empty slot range")
        if cols[0] < 0 or cols[-1] >= self.n_slots:
            raise DataError("slot range outside prediction window")
        return cols

    def subset(self, user_ids) -> "PredictionMatrix":
        idx = [self.users.index(u) for u in user_ids]
        return PredictionMatrix(tuple(user_ids), self.probs[idx], self.start_slot)


@dataclass(frozen=True)
class RingAssignment:
    """order[p] = node index occupying ring position p."""

    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.intp)
        if order.ndim != 1 or not np.array_equal(np.sort(order), np.arange(order.size)):
            raise DataError("ring order must be a permutation of node indices")
        order.setflags(write=False)
        object.__setattr__(self, "order", order)

    @property
    def n_nodes(self) -> int:
        return int(self.order.size)


def predicted_set_availability(P: PredictionMatrix, members, slots: range = None) -> float:
    """Mean over slots of the probability that at least one member is online."""
    members = np.asarray(list(members), dtype=np.intp)
    if members.size == 0:
        raise DataError("predicted_set_availability needs a non-empty member set")
    cols = P.columns(slots)
    offline = np.prod(1.0 - P.probs[members][:, cols], axis=0)
    return float(np.mean(1.0 - offline))


def neighbor_sets(ring: RingAssignment, n: int) -> list:
    """One set per ring position: the node there plus its n-1 successors."""
    if n < 1 or n > ring.n_nodes:
        raise DataError(f"replica count {n} must be in [1, {ring.n_nodes}]")
    order = ring.order
    size = ring.n_nodes
    return [order[(np.arange(i, i + n)) % size] for i in range(size)]


def _position_availability(offline_rows: np.ndarray, order: np.ndarray, positions, n: int):
    """Per-position set availability; offline_rows[u] = 1 - P[u] over the window."""
    size = order.size
    positions = np.asarray(positions, dtype=np.intp)
    idx = (positions[:, None] + np.arange(n)[None, :]) % size
    members = order[idx]  # (k, n)
    prod = np.prod(offline_rows[members], axis=1)  # (k, slots)
    return 1.0 - prod.mean(axis=1)  # (k,)


def ring_objective(P: PredictionMatrix, ring: RingAssignment, n: int, slots: range = None) -> float:
    """Mean predicted availability over all neighbor sets of the ring."""
    cols = P.columns(slots)
    offline = 1.0 - P.probs[:, cols]
    return float(_position_availability(offline, ring.order, np.arange(ring.n_nodes), n).mean())


def random_ring(n_nodes: int, rng) -> RingAssignment:
    return RingAssignment(rng.permutation(n_nodes))


def assign_identifiers(
    P: PredictionMatrix,
    n: int,
    iterations: int = DEFAULT_SWEEPS,
    seed: int = 0,
    slots: range = None,
    check_monotonic: bool = False,
) -> RingAssignment:
    """Local-search ring placement driven by predicted availability.

    Starts from a seeded random permutation. Each of ``iterations`` sweeps
    visits every node in index order, draws a uniform random partner, and
    swaps their ring positions iff the summed mean availability of the two
    nodes' neighbor sets increases. Only the neighbor sets touching either
    node are re-evaluated per proposal.

    With ``check_monotonic`` the global ring objective is recomputed from
    scratch after every committed swap and asserted non-decreasing.
    """
    size = P.n_users
    if size < n:
        raise DataError(f"need at least n={n} nodes, have {size}")
    if n < 1:
        raise DataError("replica count must be >= 1")
    rng = substream(seed, "dht-assign")
    order = rng.permutation(size).astype(np.intp)
    pos = np.empty(size, dtype=np.intp)
    pos[order] = np.arange(size)

    cols = P.columns(slots)
    offline = 1.0 - P.probs[:, cols]
    setavail = _position_availability(offline, order, np.arange(size), n)
    previous_objective = float(setavail.mean()) if check_monotonic else None

    back = np.arange(n)  # window offsets of the sets containing a position
    for _ in range(iterations):
        for v in range(size):
            u = int(rng.integers(size - 1))
            if u >= v:
                u += 1
            pos_v = (pos[v] - back) % size
            pos_u = (pos[u] - back) % size
            a0 = setavail[pos_v].mean() + setavail[pos_u].mean()

            order[pos[v]], order[pos[u]] = u, v
            pos[v], pos[u] = pos[u], pos[v]
            affected = np.unique(np.concatenate([pos_v, pos_u]))
            new_avail = _position_availability(offline, order, affected, n)
            lookup = dict(zip(affected.tolist(), new_avail))
            # neighbor sets of v now sit where u's used to be, and vice versa
            a1 = np.array([lookup[p] for p in ((pos[v] - back) % size)]).mean()
            a1 += np.array([lookup[p] for p in ((pos[u] - back) % size)]).mean()

            if a0 < a1:
                setavail[affected] = new_avail
                if check_monotonic:
                    objective = float(
                        _position_availability(offline, order, np.arange(size), n).mean()
                    )
                    if objective < previous_objective - 1e-9:
                        raise AssertionError(
                            f"objective decreased on committed swap: "
                            f"{previous_objective} -> {objective}"
                        )
                    previous_objective = objective
            else:
                # revert
                order[pos[v]], order[pos[u]] = u, v
                pos[v], pos[u] = pos[u], pos[v]
    return RingAssignment(order.copy())


def measure_availability(
    A_test: AvailabilityMatrix, ring: RingAssignment, n: int, slots: range
) -> float:
    """Fraction of slots with at least one set member online, averaged over sets.

    Node index i is row i of the matrix.
    """
    if ring.n_nodes != A_test.n_users:
        raise DataError("ring size does not match matrix user count")
    if n < 1 or n > ring.n_nodes:
        raise DataError(f"replica count {n} must be in [1, {ring.n_nodes}]")
    A_test.check_range(slots)
    online = A_test.cells[:, slots.start : slots.stop]
    by_position = online[ring.order]
    covered = np.zeros_like(by_position)
    for j in range(n):
        covered |= np.roll(by_position, -j, axis=0)
    return float(covered.mean())


def redundancy_for_target(avg_avail: float, target_unavail: float = 0.01) -> int:
    """Smallest replica count n with (1 - avail)^n below the target."""
    if not 0.0 < avg_avail < 1.0:
        raise DataError("average availability must be strictly between 0 and 1")
    if not 0.0 < target_unavail < 1.0:
        raise DataError("target unavailability must be strictly between 0 and 1")
    n = 1
    while (1.0 - avg_avail) ** n >= target_unavail:
        n += 1
        if n > 10**6:
            raise DataError("replica count exceeds 10^6; availability too low")
    return n


def equivalent_redundancy_increase(a0: float, a1: float) -> float:
    """Replication-factor growth giving the same availability gain under the
    homogeneous-independent model: log(1-a1)/log(1-a0) - 1."""
    for name, a in (("a0", a0), ("a1", a1)):
        if not 0.0 < a < 1.0:
            raise DataError(f"{name} must be strictly between 0 and 1")
    return math.log(1.0 - a1) / math.log(1.0 - a0) - 1.0


# ---------------------------------------------------------------------------
# Prediction matrix file: header line then one CSV row of probabilities per
# user, 17 significant digits (round-trips exactly).
# ---------------------------------------------------------------------------


def write_predictions(P: PredictionMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#start_slot={P.start_slot} slots={P.n_slots}\n")
        for i, user in enumerate(P.users):
            fh.write(user + "," + ",".join(f"{v:.17g}" for v in P.probs[i]) + "\n")


def read_predictions(path) -> PredictionMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("#"):
            raise DataError(f"{path}: missing prediction header line")
        meta = {}
        for tok in header[1:].split():
            key, _, value = tok.partition("=")
            meta[key] = value
        try:
            start_slot = int(meta["start_slot"])
            n_slots = int(meta["slots"])
        except (KeyError, ValueError):
            raise DataError(f"{path}: malformed prediction header {header!r}") from None
        users, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != n_slots + 1:
                raise DataError(f"{path}:{lineno}: expected {n_slots} probabilities")
            users.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
        probs = np.array(rows) if rows else np.zeros((0, n_slots))
    return PredictionMatrix(tuple(users), probs, start_slot)
