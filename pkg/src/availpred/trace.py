"""Availability matrices built from connectivity event logs.

The core data structure is a boolean user-by-timeslot grid: cell (u, t)
is 1 when user u was online at some point during slot t. A user counts
as online in a slot if any of their sessions overlaps the half-open slot
interval; this "any overlap" rule is deterministic and independent of
any sampling phase, and every downstream number depends on it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

SLOT_SECONDS_DEFAULT = 3600
SECONDS_PER_DAY = 86400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY
PERIOD_NAMES = ("A", "B", "C", "D")
PERIOD_WEEKS = 6


@dataclass(frozen=True)
class SessionEvent:
    """One login/logout pair; the session covers [login_ts, logout_ts)."""

    user_id: str
    login_ts: int
    logout_ts: int

    def __post_init__(self):
        if not self.user_id:
            raise DataError("session event with empty user_id")
        if self.logout_ts <= self.login_ts:
            raise DataError(
                f"session for {self.user_id!r}: logout {self.logout_ts} <= login {self.login_ts}"
            )


@dataclass(frozen=True)
class AvailabilityMatrix:
    """Boolean occupancy grid, users (rows, lexicographic) x timeslots."""

    origin_ts: int
    slot_seconds: int
    users: tuple
    cells: np.ndarray

    def __post_init__(self):
        if self.slot_seconds <= 0:
            raise DataError("slot_seconds must be positive")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim != 2:
            raise DataError("cells must be a 2-D grid")
        if cells.shape[1] < 1:
            raise DataError("matrix must have at least one slot")
        if cells.shape[0] != len(self.users):
            raise DataError("cells rows must match user count")
        if len(set(self.users)) != len(self.users):
            raise DataError("duplicate user_id in matrix")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_slots(self) -> int:
        return self.cells.shape[1]

    @property
    def slots_per_day(self) -> int:
        if SECONDS_PER_DAY % self.slot_seconds:
            raise DataError("slot_seconds must divide one day for periodic features")
        return SECONDS_PER_DAY // self.slot_seconds

    @property
    def slots_per_week(self) -> int:
        return 7 * self.slots_per_day

    def row(self, user_id: str) -> int:
        try:
            return self.users.index(user_id)
        except ValueError:
            raise DataError(f"unknown user {user_id!r}") from None

    def rows(self, user_ids) -> np.ndarray:
        return np.array([self.row(u) for u in user_ids], dtype=np.intp)

    def check_range(self, slots: range, allow_empty: bool = False) -> range:
        """Validate a slot range against this matrix."""
        if slots.step != 1:
            raise DataError("slot ranges must have step 1")
        if len(slots) == 0 and not allow_empty:
            raise DataError("empty slot range")
        if len(slots) and (slots.start < 0 or slots.stop > self.n_slots):
            raise DataError(
                f"slot range [{slots.start}, {slots.stop}) outside matrix [0, {self.n_slots})"
            )
        return slots


@dataclass(frozen=True)
class PeriodSplit:
    """The four consecutive six-week slot ranges A, B, C, D."""

    a: range
    b: range
    c: range
    d: range

    def __getitem__(self, name: str) -> range:
        try:
            return getattr(self, name.lower())
        except AttributeError:
            raise DataError(f"unknown period {name!r}, expected one of {PERIOD_NAMES}") from None

    def as_dict(self) -> dict:
        return {"A": self.a, "B": self.b, "C": self.c, "D": self.d}


def _event_fields(event, position: int):
    if isinstance(event, SessionEvent):
        return event.user_id, event.login_ts, event.logout_ts
    try:
        user_id, login, logout = event
    except Exception:
        raise DataError(f"event {position}: expected (user_id, login_ts, logout_ts)") from None
    if not user_id:
        raise DataError(f"event {position}: empty user_id")
    if logout <= login:
        raise DataError(f"event {position}: logout {logout} <= login {login}")
    return user_id, login, logout


def ingest_events(
    events,
    origin_ts: int,
    slot_seconds: int = SLOT_SECONDS_DEFAULT,
    horizon_slots: int = None,
    drop_empty: bool = False,
) -> AvailabilityMatrix:
    """Rasterize session events onto an hourly (or custom) slot grid.

    Cell (u, t) is set when any session of u overlaps
    [origin_ts + t*slot_seconds, origin_ts + (t+1)*slot_seconds).
    Sessions are clipped to the horizon; users whose sessions all fall
    outside it keep an all-zero row unless ``drop_empty`` is set.
    """
    if horizon_slots is None or horizon_slots < 1:
        raise DataError("horizon_slots must be >= 1")
    if slot_seconds <= 0:
        raise DataError("slot_seconds must be positive")

    parsed = [_event_fields(ev, i) for i, ev in enumerate(events)]
    users = sorted({u for u, _, _ in parsed})
    index = {u: i for i, u in enumerate(users)}
    cells = np.zeros((len(users), horizon_slots), dtype=bool)

    for user_id, login, logout in parsed:
        # overlap with slot t iff login < slot_end and logout > slot_start
        first = max(0, (login - origin_ts) // slot_seconds)
        if logout <= origin_ts:
            continue
        last = min(horizon_slots - 1, (logout - origin_ts - 1) // slot_seconds)
        if first > last:
            continue
        cells[index[user_id], first : last + 1] = True

    if drop_empty and users:
        keep = cells.any(axis=1)
        users = [u for u, k in zip(users, keep) if k]
        cells = cells[keep]

    return AvailabilityMatrix(origin_ts, slot_seconds, tuple(users), cells)


def split_periods(m: AvailabilityMatrix) -> PeriodSplit:
    """First four consecutive six-week ranges; trailing slots ignored."""
    if SECONDS_PER_WEEK % m.slot_seconds:
        raise DataError("slot_seconds must divide one week to form six-week periods")
    period = PERIOD_WEEKS * (SECONDS_PER_WEEK // m.slot_seconds)
    needed = 4 * period
    if m.n_slots < needed:
        raise DataError(
            f"matrix too short for four six-week periods: need {needed} slots, have {m.n_slots}"
        )
    ranges = [range(i * period, (i + 1) * period) for i in range(4)]
    return PeriodSplit(*ranges)


def filter_superpeers(
    m: AvailabilityMatrix, reference: range, threshold_hours_per_day: float = 4.0
) -> list:
    """Users averaging at least the threshold hours/day online over ``reference``."""
    m.check_range(reference)
    frac = m.cells[:, reference.start : reference.stop].mean(axis=1)
    cutoff = threshold_hours_per_day / 24.0
    return [u for u, f in zip(m.users, frac) if f >= cutoff]


def average_availability(m: AvailabilityMatrix, users, slots: range) -> float:
    """Mean cell value over the given users and slot range."""
    users = list(users)
    if not users:
        raise DataError("average_availability needs a non-empty user set")
    m.check_range(slots)
    rows = m.rows(users)
    return float(m.cells[np.ix_(rows, range(slots.start, slots.stop))].mean())


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

EVENT_CSV_HEADER = ["user_id", "login_ts", "logout_ts"]


def read_events_csv(path) -> list:
    """Read `user_id,login_ts,logout_ts` rows; malformed rows are rejected
    with their line number."""
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EVENT_CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(EVENT_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            user_id, login_s, logout_s = row
            try:
                login, logout = int(login_s), int(logout_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: timestamps must be integers") from None
            if logout <= login:
                raise DataError(f"{path}:{lineno}: logout {logout} <= login {login}")
            events.append(SessionEvent(user_id, login, logout))
    return events


def write_events_csv(events, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENT_CSV_HEADER)
        for ev in events:
            writer.writerow([ev.user_id, ev.login_ts, ev.logout_ts])


def write_matrix(m: AvailabilityMatrix, path) -> None:
    """Text dump: header line, then one `user_id,0/1-string` line per user."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#origin_ts={m.origin_ts} slot_seconds={m.slot_seconds} slots={m.n_slots}\n")
        digits = np.where(m.cells, "1", "0")
        for i, user in enumerate(m.users):
            fh.write(f"{user},{''.join(digits[i])}\n")


def read_matrix(path) -> AvailabilityMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("#"):
            raise DataError(f"{path}: missing matrix header line")
        meta = {}
        for tok in header[1:].split():
            key, _, value = tok.partition("=")
            meta[key] = value
        try:
            origin_ts = int(meta["origin_ts"])
            slot_seconds = int(meta["slot_seconds"])
            n_slots = int(meta["slots"])
        except (KeyError, ValueError):
            raise DataError(f"{path}: malformed matrix header {header!r}") from None
        users, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            user_id, sep, bits = line.partition(",")
            if not sep or len(bits) != n_slots or set(bits) - {"0", "1"}:
                raise DataError(f"{path}:{lineno}: malformed matrix row")
            users.append(user_id)
            rows.append(np.frombuffer(bits.encode("ascii"), dtype=np.uint8) == ord("1"))
        cells = np.array(rows, dtype=bool) if rows else np.zeros((0, n_slots), dtype=bool)
    return AvailabilityMatrix(origin_ts, slot_seconds, tuple(users), cells)
