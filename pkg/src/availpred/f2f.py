"""Friend-to-friend storage placement on a social graph.

Every node owns one unit-size data object and can hold at most ``k``
objects for friends. Two placement strategies are provided: a local search
that moves a stored object from the owner whose predicted availability it
helps least to the friend it would help most, and a correlation-driven
baseline that pairs a random holder with the friend whose availability
agrees with it least often.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import substream
from .trace import AvailabilityMatrix
from .dht import PredictionMatrix

MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class SocialGraph:
    """Undirected friendship graph over node indices 0..n-1."""

    n_nodes: int
    edges: tuple  # sorted (lo, hi) pairs, no self loops, no duplicates

    def __post_init__(self):
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise DataError(f"self loop on node {a}")
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise DataError(f"edge ({a}, {b}) outside node range")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise DataError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", tuple(sorted(seen)))
        neighbors = [[] for _ in range(self.n_nodes)]
        for a, b in self.edges:
            neighbors[a].append(b)
            neighbors[b].append(a)
        object.__setattr__(
            self, "_neighbors", tuple(np.array(sorted(ns), dtype=np.intp) for ns in neighbors)
        )

    def neighbors(self, node: int) -> np.ndarray:
        return self._neighbors[node]

    def degree(self, node: int) -> int:
        return len(self._neighbors[node])

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        seen = np.zeros(self.n_nodes, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for w in self._neighbors[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        return bool(seen.all())


def generate_ws_graph(
    nodes: int, degree: int = 20, rewire_p: float = 0.5, seed: int = 0
) -> SocialGraph:
    """Watts-Strogatz small world: ring lattice plus random rewiring.

    Each node starts connected to its degree/2 nearest neighbors on each
    side; every lattice edge is then rewired with probability ``rewire_p``
    to a uniformly chosen non-duplicate, non-self target. Edge count is
    preserved (nodes * degree / 2).
    """
    if degree % 2 or degree <= 0:
        raise DataError("degree must be a positive even number")
    if degree >= nodes:
        raise DataError("degree must be smaller than the node count")
    if not 0.0 <= rewire_p <= 1.0:
        raise DataError("rewire probability must be in [0, 1]")
    rng = substream(seed, "ws-graph")
    adjacency = [set() for _ in range(nodes)]
    edges = []
    for j in range(1, degree // 2 + 1):
        for i in range(nodes):
            w = (i + j) % nodes
            edges.append((i, w))
            adjacency[i].add(w)
            adjacency[w].add(i)
    rewired = []
    for i, w in edges:
        if rng.random() < rewire_p and len(adjacency[i]) < nodes - 1:
            new_w = int(rng.integers(nodes))
            while new_w == i or new_w in adjacency[i]:
                new_w = int(rng.integers(nodes))
            adjacency[i].discard(w)
            adjacency[w].discard(i)
            adjacency[i].add(new_w)
            adjacency[new_w].add(i)
            rewired.append((i, new_w))
        else:
            rewired.append((i, w))
    return SocialGraph(nodes, tuple(rewired))


@dataclass
class PlacementMapping:
    """holders[owner] = set of nodes holding a replica of owner's data."""

    holders: list  # list of sets, indexed by owner
    capacity: int
    graph: SocialGraph

    def load(self, node: int) -> int:
        return sum(1 for hs in self.holders if node in hs)

    def loads(self) -> np.ndarray:
        out = np.zeros(self.graph.n_nodes, dtype=np.int64)
        for hs in self.holders:
            for h in hs:
                out[h] += 1
        return out

    def replication_counts(self) -> np.ndarray:
        return np.array([len(hs) for hs in self.holders], dtype=np.int64)

    def validate(self) -> None:
        loads = self.loads()
        if loads.max(initial=0) > self.capacity:
            worst = int(loads.argmax())
            raise AssertionError(f"node {worst} holds {loads[worst]} > capacity {self.capacity}")
        for owner, hs in enumerate(self.holders):
            friends = set(self.graph.neighbors(owner).tolist())
            if not set(hs) <= friends:
                raise AssertionError(f"holder of node {owner} is not a friend")


def _pa_from_complement(comp: np.ndarray, members) -> float:
    """Predicted availability from precomputed 1-P rows; empty set is 0."""
    members = list(members)
    if not members:
        return 0.0
    offline = np.prod(comp[np.asarray(members, dtype=np.intp)], axis=0)
    return float(np.mean(1.0 - offline))


def _pa(P: PredictionMatrix, members, cols) -> float:
    """Predicted availability with the empty set defined as 0."""
    return _pa_from_complement(1.0 - P.probs[:, cols], members)


def placement_objective(P: PredictionMatrix, mapping: PlacementMapping, slots: range = None) -> float:
    """Total predicted availability, summed over data owners."""
    comp = 1.0 - P.probs[:, P.columns(slots)]
    return float(sum(_pa_from_complement(comp, hs) for hs in mapping.holders))


def place_predictive(
    P: PredictionMatrix,
    g: SocialGraph,
    k: int,
    slots: range = None,
    seed: int = 0,
    check: bool = False,
    max_sweeps: int = MAX_SWEEPS,
) -> PlacementMapping:
    """Prediction-driven local search placement.

    Initialization: every node picks min(k, friend count) random friends
    and becomes a holder of their data. Optimization: sweeping nodes in
    index order, node ``v`` finds the held owner its copy helps least and
    the unheld owner a copy would help most (availability deltas over the
    prediction window; ties broken by lowest friend index) and exchanges
    one for the other when that strictly raises the total. Stops when a
    full sweep commits nothing. Every exchange is one-for-one, so no node
    ever exceeds its capacity.
    """
    if k < 1:
        raise DataError("capacity must be >= 1")
    if g.n_nodes != P.n_users:
        raise DataError("graph size does not match prediction matrix users")
    for v in range(g.n_nodes):
        if g.degree(v) == 0:
            raise DataError(f"node {v} has no friends; cannot place its data")
    cols = P.columns(slots)
    comp = 1.0 - P.probs[:, cols]
    rng = substream(seed, "f2f-predictive")

    holders = [set() for _ in range(g.n_nodes)]
    for v in range(g.n_nodes):
        friends = g.neighbors(v)
        take = min(k, len(friends))
        chosen = rng.choice(friends, size=take, replace=False)
        for f in chosen:
            holders[int(f)].add(v)  # v stores f's data -> v is a holder of f
    mapping = PlacementMapping(holders=holders, capacity=k, graph=g)
    if check:
        mapping.validate()
        objective = placement_objective(P, mapping, slots)

    def delta(owner: int, v: int) -> float:
        hs = holders[owner]
        with_v = hs | {v}
        without_v = hs - {v}
        return _pa_from_complement(comp, with_v) - _pa_from_complement(comp, without_v)

    for _ in range(max_sweeps):
        changed = False
        for v in range(g.n_nodes):
            friends = g.neighbors(v)
            held = [int(f) for f in friends if v in holders[f]]
            unheld = [int(f) for f in friends if v not in holders[f]]
            if not held or not unheld:
                continue
            d_held = [delta(f, v) for f in held]
            i0 = int(np.argmin(d_held))  # argmin keeps the first (lowest index) on ties
            f0, d0 = held[i0], d_held[i0]
            d_unheld = [delta(f, v) for f in unheld]
            i1 = int(np.argmax(d_unheld))
            f1, d1 = unheld[i1], d_unheld[i1]
            if d0 < d1:
                holders[f0].discard(v)
                holders[f1].add(v)
                changed = True
                if check:
                    mapping.validate()
                    new_objective = placement_objective(P, mapping, slots)
                    if new_objective <= objective - 1e-12:
                        raise AssertionError(
                            f"placement objective fell on exchange: {objective} -> {new_objective}"
                        )
                    objective = new_objective
        if not changed:
            break
    else:
        raise DataError(f"placement did not stabilize within {max_sweeps} sweeps")
    return mapping


def correlation_counts(A_ref: AvailabilityMatrix, ref_range: range) -> np.ndarray:
    """Pairwise agreement counts: slots where two users have equal state."""
    A_ref.check_range(ref_range)
    X = A_ref.cells[:, ref_range.start : ref_range.stop].astype(np.float64)
    signed = 2.0 * X - 1.0
    n_slots = len(ref_range)
    agree = (signed @ signed.T + n_slots) / 2.0
    return np.rint(agree).astype(np.int64)


def place_ra(
    A_ref: AvailabilityMatrix,
    ref_range: range,
    g: SocialGraph,
    k: int,
    seed: int = 0,
    check: bool = False,
    max_rounds: int = MAX_SWEEPS,
) -> PlacementMapping:
    """Random & Anti-correlated placement baseline.

    Nodes take turns in index order. On its turn a node with eligible
    friends (spare capacity, not already holding its data) adds one random
    holder, then, if another friend is still eligible, the one whose
    availability agrees least with the first pick (ties by lowest index).
    Rounds repeat until all capacity is consumed or a full round makes no
    progress. Correlations come from the reference (training-side) window,
    never from test data.
    """
    if k < 1:
        raise DataError("capacity must be >= 1")
    if g.n_nodes != A_ref.n_users:
        raise DataError("graph size does not match matrix user count")
    corr = correlation_counts(A_ref, ref_range)
    rng = substream(seed, "f2f-ra")

    free = np.full(g.n_nodes, k, dtype=np.int64)
    holders = [set() for _ in range(g.n_nodes)]
    for _ in range(max_rounds):
        progress = False
        if free.sum() == 0:
            break
        for v in range(g.n_nodes):
            eligible = [int(f) for f in g.neighbors(v) if free[f] > 0 and f not in holders[v]]
            if not eligible:
                continue
            r = int(eligible[rng.integers(len(eligible))])
            holders[v].add(r)
            free[r] -= 1
            progress = True
            second = [f for f in eligible if f != r and free[f] > 0]
            if not second:
                continue
            scores = corr[r, second]
            a = second[int(np.argmin(scores))]
            holders[v].add(a)
            free[a] -= 1
        if not progress:
            break
    mapping = PlacementMapping(holders=holders, capacity=k, graph=g)
    if check:
        mapping.validate()
    return mapping


def measure_placement_availability(
    A_test: AvailabilityMatrix, mapping: PlacementMapping, slots: range
) -> float:
    """Mean over owners of the fraction of slots with some holder online.

    Owners with no holders contribute 0.
    """
    A_test.check_range(slots)
    if mapping.graph.n_nodes != A_test.n_users:
        raise DataError("mapping does not match matrix user count")
    online = A_test.cells[:, slots.start : slots.stop]
    values = []
    for hs in mapping.holders:
        if not hs:
            values.append(0.0)
            continue
        members = np.fromiter(sorted(hs), dtype=np.intp)
        values.append(float(online[members].any(axis=0).mean()))
    return float(np.mean(values))
