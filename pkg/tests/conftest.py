"""Shared synthetic populations used across the test modules."""

import numpy as np
import pytest

from availpred.synth import UserProfile, generate_trace


def hour_block_profile(start: int, length: int, base=1.0, noise=0.0, weekdays=None):
    """Profile online during [start, start+length) hours of every day."""
    daily = [0.0] * 24
    for h in range(start, start + length):
        daily[h % 24] = 1.0
    weekday = tuple(weekdays) if weekdays is not None else (1.0,) * 7
    return UserProfile(base_rate=base, daily_profile=tuple(daily), weekday_profile=weekday, noise=noise)


def day_profile(noise=0.0):
    """Online 08:00-20:00."""
    return hour_block_profile(8, 12, noise=noise)


def night_profile(noise=0.0):
    """Complement of day_profile: online 20:00-08:00."""
    return hour_block_profile(20, 12, noise=noise)


def flat_profile(rate, noise=0.0):
    return UserProfile(base_rate=rate, noise=noise)


def daily_structured_profiles(n=24, seed=555):
    """Purely daily structure with heterogeneous rates.

    Every user has an 8-hour window with an individual online rate and a
    lower off-window rate, identical across weekdays; window starts cycle
    through the clock so the population-level daily pattern is nearly
    flat. Rate heterogeneity makes ranking quality depend on how well a
    feature estimates per-(user, hour) rates, which separates the daily
    feature (42 observations per cell) from the weekly one (6 per cell).
    """
    rng = np.random.default_rng(seed)
    profiles = []
    for u in range(n):
        hi = float(rng.uniform(0.6, 0.95))
        lo = float(rng.uniform(0.05, 0.35))
        daily = [lo / hi] * 24
        for h in range((u * 7) % 24, (u * 7) % 24 + 8):
            daily[h % 24] = 1.0
        profiles.append(UserProfile(base_rate=hi, daily_profile=tuple(daily)))
    return profiles


def day_night_profiles(n_day=15, n_night=45, noise=0.05):
    return [day_profile(noise=noise)] * n_day + [night_profile(noise=noise)] * n_night


@pytest.fixture(scope="session")
def day_night_trace():
    """60 users, complementary day/night, 5% flip noise, 24 weeks.

    15 day users and 45 night users: the imbalance makes one-type neighbor
    runs common under random ring placement, which is what the optimizer
    is supposed to remove.
    """
    return generate_trace(day_night_profiles(), weeks=24, seed=1234)


@pytest.fixture(scope="session")
def staggered_trace():
    """60 users with noise-free 8-hour daily windows at staggered offsets."""
    profiles = [hour_block_profile(start=u % 24, length=8) for u in range(60)]
    return generate_trace(profiles, weeks=24, seed=99)


def brute_force_overlap_matrix(events, origin_ts, slot_seconds, horizon_slots):
    """Oracle: per-slot interval-intersection scan, no arithmetic shortcuts."""
    users = sorted({e.user_id for e in events})
    cells = np.zeros((len(users), horizon_slots), dtype=bool)
    for i, user in enumerate(users):
        for t in range(horizon_slots):
            lo = origin_ts + t * slot_seconds
            hi = lo + slot_seconds
            for e in events:
                if e.user_id == user and e.login_ts < hi and e.logout_ts > lo:
                    cells[i, t] = True
                    break
    return users, cells
