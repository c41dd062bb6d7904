"""Synthetic availability traces with controllable periodic structure.

Each user draws an independent Bernoulli per slot whose probability is
base_rate * daily multiplier * weekday multiplier (clamped to [0, 1]),
then the outcome is flipped with probability ``noise``. Hour-of-day and
day-of-week come from slot-index modulo arithmetic, not the calendar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import substream
from .trace import AvailabilityMatrix

HOURS_PER_DAY = 24
DAYS_PER_WEEK = 7


@dataclass(frozen=True)
class UserProfile:
    base_rate: float
    daily_profile: tuple = field(default=(1.0,) * HOURS_PER_DAY)
    weekday_profile: tuple = field(default=(1.0,) * DAYS_PER_WEEK)
    noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.base_rate <= 1.0:
            raise DataError("base_rate must be in [0, 1]")
        if len(self.daily_profile) != HOURS_PER_DAY:
            raise DataError("daily_profile needs 24 multipliers")
        if len(self.weekday_profile) != DAYS_PER_WEEK:
            raise DataError("weekday_profile needs 7 multipliers")
        if min(self.daily_profile) < 0 or min(self.weekday_profile) < 0:
            raise DataError("profile multipliers must be >= 0")
        if not 0.0 <= self.noise <= 1.0:
            raise DataError("noise must be in [0, 1]")
        object.__setattr__(self, "daily_profile", tuple(float(x) for x in self.daily_profile))
        object.__setattr__(self, "weekday_profile", tuple(float(x) for x in self.weekday_profile))

    def slot_probabilities(self, n_slots: int) -> np.ndarray:
        hours = np.arange(n_slots) % HOURS_PER_DAY
        dows = (np.arange(n_slots) // HOURS_PER_DAY) % DAYS_PER_WEEK
        p = self.base_rate * np.asarray(self.daily_profile)[hours]
        p = p * np.asarray(self.weekday_profile)[dows]
        return np.clip(p, 0.0, 1.0)


def user_label(index: int) -> str:
    # zero-padded so lexicographic user order equals numeric order
    return f"u{index:05d}"


def generate_trace(profiles, weeks: int, seed: int) -> AvailabilityMatrix:
    """Hourly matrix of ``weeks`` weeks, one row per profile, seeded.

    Row u is generated from its own named substream, so appending users
    leaves existing rows bit-identical.
    """
    if weeks < 1:
        raise DataError("weeks must be >= 1")
    profiles = list(profiles)
    n_slots = weeks * DAYS_PER_WEEK * HOURS_PER_DAY
    cells = np.zeros((len(profiles), n_slots), dtype=bool)
    for i, profile in enumerate(profiles):
        rng = substream(seed, "synth-user", i)
        p = profile.slot_probabilities(n_slots)
        on = rng.random(n_slots) < p
        if profile.noise > 0:
            on ^= rng.random(n_slots) < profile.noise
        cells[i] = on
    users = tuple(user_label(i) for i in range(len(profiles)))
    return AvailabilityMatrix(origin_ts=0, slot_seconds=3600, users=users, cells=cells)


# ---------------------------------------------------------------------------
# Profile files: blank-line separated key=value blocks, one block per user
# group, replicated ``count`` times. Example:
#
#   name=office
#   count=10
#   base_rate=0.9
#   daily=0,0,0,0,0,0,0,0,1,1,1,1,1,1,1,1,1,1,0,0,0,0,0,0
#   weekday=1,1,1,1,1,0,0
#   noise=0.05
# ---------------------------------------------------------------------------


def _parse_floats(value: str, n: int, key: str) -> tuple:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != n:
        raise DataError(f"profile field {key!r} needs {n} comma-separated values")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise DataError(f"profile field {key!r} has a non-numeric value") from None


def parse_profiles(text: str) -> list:
    """Expand a profile file into the per-user profile list."""
    profiles = []
    blocks, current = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                blocks.append(current)
                current = []
            continue
        if "=" not in line:
            raise DataError(f"profile line without '=': {raw!r}")
        current.append(line)
    if current:
        blocks.append(current)

    for block in blocks:
        fields = {}
        for line in block:
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        fields.pop("name", None)
        count = int(fields.pop("count", "1"))
        if count < 1:
            raise DataError("profile count must be >= 1")
        if "base_rate" not in fields:
            raise DataError("profile block missing base_rate")
        profile = UserProfile(
            base_rate=float(fields.pop("base_rate")),
            daily_profile=_parse_floats(fields.pop("daily"), HOURS_PER_DAY, "daily")
            if "daily" in fields
            else (1.0,) * HOURS_PER_DAY,
            weekday_profile=_parse_floats(fields.pop("weekday"), DAYS_PER_WEEK, "weekday")
            if "weekday" in fields
            else (1.0,) * DAYS_PER_WEEK,
            noise=float(fields.pop("noise", "0")),
        )
        if fields:
            raise DataError(f"unknown profile fields: {sorted(fields)}")
        profiles.extend([profile] * count)
    if not profiles:
        raise DataError("profile file defines no users")
    return profiles


def read_profiles(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_profiles(fh.read())
