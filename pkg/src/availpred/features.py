"""The five periodic availability features and design-matrix assembly.

Every feature is a smoothed online fraction (n_on + 1) / (n_on + n_off + 2)
over a scoped set of past observations: the scope is global (all users) or
individual, and the periodicity matches all slots (flat), the same hour of
day (daily), or the same hour and weekday (weekly). The +1/+2 smoothing is
the posterior mean of a Bernoulli rate under a flat Beta(1, 1) prior, so a
scope with zero observations falls back to 0.5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .trace import AvailabilityMatrix

FEATURE_NAMES = (
    "global_daily",
    "global_weekly",
    "individual_flat",
    "individual_daily",
    "individual_weekly",
)
PERIODICITIES = ("flat", "daily", "weekly")
N_FEATURES = 5

# columns with sd below this are treated as constant and left unscaled
CONSTANT_SD = 1e-12


def feature_value(n_on: int, n_off: int) -> float:
    """Smoothed online fraction; strictly inside (0, 1)."""
    if n_on < 0 or n_off < 0:
        raise DataError("observation counts must be non-negative")
    return (n_on + 1) / (n_on + n_off + 2)


@dataclass(frozen=True)
class FeatureVector:
    global_daily: float
    global_weekly: float
    individual_flat: float
    individual_daily: float
    individual_weekly: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.global_daily,
                self.global_weekly,
                self.individual_flat,
                self.individual_daily,
                self.individual_weekly,
            ]
        )


class CounterTables:
    """Observation counters over a window, one pass to build, O(1) lookups.

    Supports streaming: ``add_observation`` keeps every table consistent
    with a recount over the extended observation multiset.
    """

    def __init__(self, matrix: AvailabilityMatrix, obs_range: range):
        matrix.check_range(obs_range, allow_empty=True)
        self.users = matrix.users
        self._index = {u: i for i, u in enumerate(matrix.users)}
        self.spd = matrix.slots_per_day
        n_users, spd = matrix.n_users, self.spd

        self.user_daily_on = np.zeros((n_users, spd), dtype=np.int64)
        self.user_daily_cnt = np.zeros((n_users, spd), dtype=np.int64)
        self.user_weekly_on = np.zeros((n_users, 7, spd), dtype=np.int64)
        self.user_weekly_cnt = np.zeros((n_users, 7, spd), dtype=np.int64)
        self.user_flat_on = np.zeros(n_users, dtype=np.int64)
        self.user_flat_cnt = np.zeros(n_users, dtype=np.int64)

        if len(obs_range):
            sub = matrix.cells[:, obs_range.start : obs_range.stop]
            slots = np.arange(obs_range.start, obs_range.stop)
            hours = slots % spd
            dows = (slots // spd) % 7
            for h in range(spd):
                mask = hours == h
                if not mask.any():
                    continue
                self.user_daily_on[:, h] = sub[:, mask].sum(axis=1)
                self.user_daily_cnt[:, h] = int(mask.sum())
                for d in range(7):
                    wmask = mask & (dows == d)
                    if not wmask.any():
                        continue
                    self.user_weekly_on[:, d, h] = sub[:, wmask].sum(axis=1)
                    self.user_weekly_cnt[:, d, h] = int(wmask.sum())
            self.user_flat_on = sub.sum(axis=1).astype(np.int64)
            self.user_flat_cnt = np.full(n_users, len(obs_range), dtype=np.int64)

        self.global_daily_on = self.user_daily_on.sum(axis=0)
        self.global_daily_cnt = self.user_daily_cnt.sum(axis=0)
        self.global_weekly_on = self.user_weekly_on.sum(axis=0)
        self.global_weekly_cnt = self.user_weekly_cnt.sum(axis=0)
        self.global_flat_on = int(self.user_flat_on.sum())
        self.global_flat_cnt = int(self.user_flat_cnt.sum())

    def user_row(self, user_id: str) -> int:
        try:
            return self._index[user_id]
        except KeyError:
            raise DataError(f"unknown user {user_id!r}") from None

    def add_observation(self, user_id: str, slot: int, online: bool) -> None:
        """Fold one extra (user, slot, state) observation into every table."""
        u = self.user_row(user_id)
        h = slot % self.spd
        d = (slot // self.spd) % 7
        v = int(bool(online))
        self.user_daily_on[u, h] += v
        self.user_daily_cnt[u, h] += 1
        self.user_weekly_on[u, d, h] += v
        self.user_weekly_cnt[u, d, h] += 1
        self.user_flat_on[u] += v
        self.user_flat_cnt[u] += 1
        self.global_daily_on[h] += v
        self.global_daily_cnt[h] += 1
        self.global_weekly_on[d, h] += v
        self.global_weekly_cnt[d, h] += 1
        self.global_flat_on += v
        self.global_flat_cnt += 1

    def counts(self, user_id, periodicity: str, target_slot: int):
        """(n_on, n_off) for one scope; ``user_id=None`` means all users."""
        h = target_slot % self.spd
        d = (target_slot // self.spd) % 7
        if user_id is None:
            if periodicity == "flat":
                on, cnt = self.global_flat_on, self.global_flat_cnt
            elif periodicity == "daily":
                on, cnt = self.global_daily_on[h], self.global_daily_cnt[h]
            elif periodicity == "weekly":
                on, cnt = self.global_weekly_on[d, h], self.global_weekly_cnt[d, h]
            else:
                raise DataError(f"unknown periodicity {periodicity!r}")
        else:
            u = self.user_row(user_id)
            if periodicity == "flat":
                on, cnt = self.user_flat_on[u], self.user_flat_cnt[u]
            elif periodicity == "daily":
                on, cnt = self.user_daily_on[u, h], self.user_daily_cnt[u, h]
            elif periodicity == "weekly":
                on, cnt = self.user_weekly_on[u, d, h], self.user_weekly_cnt[u, d, h]
            else:
                raise DataError(f"unknown periodicity {periodicity!r}")
        return int(on), int(cnt - on)

    def feature_vector(self, user_id: str, target_slot: int) -> FeatureVector:
        return FeatureVector(
            global_daily=feature_value(*self.counts(None, "daily", target_slot)),
            global_weekly=feature_value(*self.counts(None, "weekly", target_slot)),
            individual_flat=feature_value(*self.counts(user_id, "flat", target_slot)),
            individual_daily=feature_value(*self.counts(user_id, "daily", target_slot)),
            individual_weekly=feature_value(*self.counts(user_id, "weekly", target_slot)),
        )


def count_observations(
    obs: AvailabilityMatrix, obs_range: range, user, periodicity: str, target_slot: int
):
    """(n_on, n_off) over the window, filtered to the scope of one feature."""
    obs.check_range(obs_range)
    if periodicity not in PERIODICITIES:
        raise DataError(f"unknown periodicity {periodicity!r}")
    spd = obs.slots_per_day
    slots = np.arange(obs_range.start, obs_range.stop)
    if periodicity == "daily":
        slots = slots[slots % spd == target_slot % spd]
    elif periodicity == "weekly":
        same_hour = slots % spd == target_slot % spd
        same_dow = (slots // spd) % 7 == (target_slot // spd) % 7
        slots = slots[same_hour & same_dow]
    if user is None:
        block = obs.cells[:, slots]
    else:
        block = obs.cells[obs.row(user), slots]
    return int(block.sum()), int(block.size - block.sum())


def extract_features(
    obs: AvailabilityMatrix,
    obs_range: range,
    user: str,
    target_slot: int,
    tables: CounterTables = None,
) -> FeatureVector:
    """Five feature values for one (user, future slot) pair.

    Pass a prebuilt ``CounterTables`` when extracting many vectors; feature
    lookups are then O(1).
    """
    if tables is None:
        obs.check_range(obs_range)
        tables = CounterTables(obs, obs_range)
    return tables.feature_vector(user, target_slot)


def feature_grid(
    obs: AvailabilityMatrix,
    obs_range: range,
    target_slots: range,
    users=None,
    tables: CounterTables = None,
) -> np.ndarray:
    """Raw feature array of shape (users, target slots, 5), fully vectorized."""
    obs.check_range(obs_range)
    if tables is None:
        tables = CounterTables(obs, obs_range)
    user_ids = list(users) if users is not None else list(obs.users)
    if not user_ids:
        raise DataError("empty user set")
    if len(target_slots) == 0:
        raise DataError("empty target slot range")
    rows = np.array([tables.user_row(u) for u in user_ids], dtype=np.intp)
    slots = np.arange(target_slots.start, target_slots.stop)
    h = slots % tables.spd
    d = (slots // tables.spd) % 7

    def smooth(on, cnt):
        return (on + 1.0) / (cnt + 2.0)

    n_u, n_t = len(rows), len(slots)
    out = np.empty((n_u, n_t, N_FEATURES))
    out[:, :, 0] = smooth(tables.global_daily_on[h], tables.global_daily_cnt[h])[None, :]
    out[:, :, 1] = smooth(tables.global_weekly_on[d, h], tables.global_weekly_cnt[d, h])[None, :]
    out[:, :, 2] = smooth(tables.user_flat_on[rows], tables.user_flat_cnt[rows])[:, None]
    out[:, :, 3] = smooth(
        tables.user_daily_on[rows][:, h], tables.user_daily_cnt[rows][:, h]
    )
    out[:, :, 4] = smooth(
        tables.user_weekly_on[rows][:, d, h], tables.user_weekly_cnt[rows][:, d, h]
    )
    return out


@dataclass
class DesignMatrix:
    """Per-(user, slot) feature rows with binary labels.

    ``features`` is standardized when ``standardized`` is true; constant
    columns (sd below CONSTANT_SD) are flagged and left untouched. The
    training statistics are kept so test-time features can be mapped into
    the same space.
    """

    features: np.ndarray  # (n, 5)
    labels: np.ndarray  # (n,) uint8
    user_ids: tuple  # distinct users, row-major order
    row_user: np.ndarray  # (n,) index into user_ids
    slots: np.ndarray  # (n,) absolute slot index
    standardized: bool
    feature_means: np.ndarray  # (5,)
    feature_sds: np.ndarray  # (5,) 0 marks a constant column
    constant_mask: np.ndarray  # (5,) bool

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def transform(self, raw: np.ndarray) -> np.ndarray:
        """Map raw feature values into this matrix's (possibly scaled) space."""
        if not self.standardized:
            return np.asarray(raw, dtype=float)
        out = np.asarray(raw, dtype=float).copy()
        scale = np.where(self.constant_mask, 1.0, self.feature_sds)
        shift = np.where(self.constant_mask, 0.0, self.feature_means)
        return (out - shift) / scale


def standardization_stats(features: np.ndarray):
    """Column means/sds (population sd); constant columns flagged, sd kept 0."""
    means = features.mean(axis=0)
    sds = features.std(axis=0)
    constant = sds <= CONSTANT_SD
    means = np.where(constant, 0.0, means)
    sds = np.where(constant, 0.0, sds)
    return means, sds, constant


def build_design_matrix(
    obs: AvailabilityMatrix,
    obs_range: range,
    label_range: range,
    users=None,
    standardize: bool = False,
    tables: CounterTables = None,
) -> DesignMatrix:
    """One row per (user, label slot): features from the observation window,
    label from the matrix cell.

    The observation window must end before the label window starts; nothing
    from the label period leaks into the features.
    """
    obs.check_range(obs_range)
    obs.check_range(label_range)
    if obs_range.stop > label_range.start:
        raise DataError("observation range must end before the label range starts")
    user_ids = list(users) if users is not None else list(obs.users)
    if not user_ids:
        raise DataError("empty user set")

    grid = feature_grid(obs, obs_range, label_range, user_ids, tables=tables)
    n_u, n_t, _ = grid.shape
    features = grid.reshape(n_u * n_t, N_FEATURES)
    rows = obs.rows(user_ids)
    labels = obs.cells[np.ix_(rows, range(label_range.start, label_range.stop))]
    labels = labels.reshape(n_u * n_t).astype(np.uint8)
    row_user = np.repeat(np.arange(n_u, dtype=np.intp), n_t)
    slots = np.tile(np.arange(label_range.start, label_range.stop), n_u)

    means, sds, constant = standardization_stats(features)
    if standardize:
        scale = np.where(constant, 1.0, np.where(sds > 0, sds, 1.0))
        shift = np.where(constant, 0.0, means)
        features = (features - shift) / scale

    return DesignMatrix(
        features=features,
        labels=labels,
        user_ids=tuple(user_ids),
        row_user=row_user,
        slots=slots,
        standardized=standardize,
        feature_means=means,
        feature_sds=sds,
        constant_mask=constant,
    )


# ---------------------------------------------------------------------------
# CSV dump/load: one row per (user, slot); a leading '#' metadata line keeps
# the standardization statistics so training can reuse them.
# ---------------------------------------------------------------------------

DESIGN_HEADER = ["user_id", "slot", "f1", "f2", "f3", "f4", "f5", "label"]


def _fmt_stats(values) -> str:
    return ",".join(f"{v:.17g}" for v in values)


def write_design_csv(design: DesignMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"#standardize={int(design.standardized)}"
            f" means={_fmt_stats(design.feature_means)}"
            f" sds={_fmt_stats(design.feature_sds)}\n"
        )
        fh.write(",".join(DESIGN_HEADER) + "\n")
        for i in range(design.n_rows):
            feats = ",".join(f"{v:.6f}" for v in design.features[i])
            fh.write(
                f"{design.user_ids[design.row_user[i]]},{design.slots[i]},{feats},{design.labels[i]}\n"
            )


def read_design_csv(path) -> DesignMatrix:
    with open(path, encoding="utf-8") as fh:
        meta_line = fh.readline().rstrip("\n")
        if not meta_line.startswith("#"):
            raise DataError(f"{path}: missing design metadata line")
        meta = {}
        for tok in meta_line[1:].split():
            key, _, value = tok.partition("=")
            meta[key] = value
        header = fh.readline().rstrip("\n")
        if header != ",".join(DESIGN_HEADER):
            raise DataError(f"{path}: unexpected design header")
        user_list, user_index = [], {}
        row_user, slots, feats, labels = [], [], [], []
        for lineno, line in enumerate(fh, start=3):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise DataError(f"{path}:{lineno}: expected 8 fields")
            uid = parts[0]
            if uid not in user_index:
                user_index[uid] = len(user_list)
                user_list.append(uid)
            row_user.append(user_index[uid])
            slots.append(int(parts[1]))
            feats.append([float(x) for x in parts[2:7]])
            labels.append(int(parts[7]))
    try:
        standardized = bool(int(meta["standardize"]))
        means = np.array([float(x) for x in meta["means"].split(",")])
        sds = np.array([float(x) for x in meta["sds"].split(",")])
    except (KeyError, ValueError):
        raise DataError(f"{path}: malformed design metadata") from None
    features = np.array(feats) if feats else np.zeros((0, N_FEATURES))
    return DesignMatrix(
        features=features,
        labels=np.array(labels, dtype=np.uint8),
        user_ids=tuple(user_list),
        row_user=np.array(row_user, dtype=np.intp),
        slots=np.array(slots, dtype=np.int64),
        standardized=standardized,
        feature_means=means,
        feature_sds=sds,
        constant_mask=sds <= CONSTANT_SD,
    )
