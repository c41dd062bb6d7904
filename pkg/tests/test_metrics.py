import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from availpred.errors import DataError
from availpred.metrics import (
    ScoredLabels,
    auc,
    class_accuracy,
    gm,
    metric_over_time,
    roc_points,
    trapezoid_area,
)
from oracles import pairwise_auc


def random_scored(rng, size=None, tie_prone=False, slots=False):
    n = size or int(rng.integers(5, 201))
    labels = rng.integers(0, 2, size=n)
    while labels.sum() in (0, n):
        labels = rng.integers(0, 2, size=n)
    probs = rng.random(n)
    if tie_prone:
        probs = np.round(probs, 1)
    kwargs = {}
    if slots:
        kwargs["slots"] = rng.integers(0, 50, size=n)
    return ScoredLabels(labels, probs, **kwargs)


class TestAuc:
    def test_worked_example(self):
        s = ScoredLabels([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1])
        assert auc(s) == 0.75

    def test_perfect_separation(self):
        s = ScoredLabels([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1])
        assert auc(s) == 1.0

    def test_all_ties(self):
        s = ScoredLabels([1, 0, 1, 0], [0.5, 0.5, 0.5, 0.5])
        assert auc(s) == 0.5

    def test_matches_pairwise_oracle_exactly(self):
        rng = np.random.default_rng(100)
        for i in range(100):
            s = random_scored(rng, tie_prone=(i % 2 == 0))
            assert auc(s) == pairwise_auc(s.labels.tolist(), s.probs.tolist())

    def test_single_class_errors(self):
        with pytest.raises(DataError):
            auc(ScoredLabels([1, 1], [0.5, 0.6]))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_invariant_under_increasing_transform(self, seed):
        rng = np.random.default_rng(seed)
        s = random_scored(rng, size=50, tie_prone=True)
        transformed = ScoredLabels(s.labels, s.probs**3 / 2 + s.probs / 2)
        assert auc(transformed) == pytest.approx(auc(s), abs=1e-12)

    def test_invariant_under_permutation(self):
        rng = np.random.default_rng(4)
        s = random_scored(rng)
        perm = rng.permutation(len(s))
        assert auc(ScoredLabels(s.labels[perm], s.probs[perm])) == auc(s)


class TestGm:
    def test_perfect_confident(self):
        assert gm(ScoredLabels([1, 1], [1.0, 1.0])) == pytest.approx(1.0, abs=1e-9)

    def test_worked_example(self):
        assert gm(ScoredLabels([1, 0], [0.8, 0.4])) == pytest.approx(
            np.sqrt(0.48), abs=1e-12
        )

    def test_matches_extended_precision_oracle(self):
        import mpmath

        rng = np.random.default_rng(200)
        labels = rng.integers(0, 2, size=10_000)
        probs = rng.random(10_000)
        s = ScoredLabels(labels, probs)
        with mpmath.workdps(50):
            acc = mpmath.mpf(0)
            for l, p in zip(labels.tolist(), probs.tolist()):
                lik = mpmath.mpf(p) if l == 1 else 1 - mpmath.mpf(p)
                acc += mpmath.log(lik)
            expected = float(mpmath.e ** (acc / len(labels)))
        assert gm(s) == pytest.approx(expected, abs=1e-10)

    def test_saturated_wrong_prediction_is_clamped(self):
        value = gm(ScoredLabels([1, 1], [0.0, 1.0]))
        assert 0.0 < value < 1.0

    def test_moving_toward_label_increases(self):
        base = gm(ScoredLabels([1, 0, 1], [0.6, 0.3, 0.9]))
        better = gm(ScoredLabels([1, 0, 1], [0.7, 0.3, 0.9]))
        assert better > base


class TestRoc:
    def test_perfect_passes_through_corner(self):
        s = ScoredLabels([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1])
        pts = roc_points(s)
        assert any((fpr == 0.0 and tpr == 1.0) for fpr, tpr in pts)

    def test_worked_example_area(self):
        s = ScoredLabels([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1])
        assert trapezoid_area(roc_points(s)) == pytest.approx(0.75, abs=1e-12)

    def test_all_equal_scores(self):
        s = ScoredLabels([1, 0, 1, 0], [0.5] * 4)
        pts = roc_points(s)
        assert pts.tolist() == [[0.0, 0.0], [1.0, 1.0]]
        assert trapezoid_area(pts) == 0.5

    def test_area_equals_auc_on_random_instances(self):
        rng = np.random.default_rng(9)
        for i in range(50):
            s = random_scored(rng, tie_prone=(i % 3 == 0))
            assert trapezoid_area(roc_points(s)) == pytest.approx(auc(s), abs=1e-10)

    def test_endpoints(self):
        rng = np.random.default_rng(10)
        s = random_scored(rng)
        pts = roc_points(s)
        assert pts[0].tolist() == [0.0, 0.0]
        assert pts[-1].tolist() == [1.0, 1.0]


class TestMetricOverTime:
    def test_full_window_single_point(self):
        rng = np.random.default_rng(0)
        s = random_scored(rng, size=100, slots=True)
        span = int(s.slots.max() - s.slots.min() + 1)
        xs, ys = metric_over_time(s, span, "auc")
        assert len(xs) == 1
        assert ys[0] == auc(s)

    def test_perfect_gm_everywhere(self):
        labels = np.tile([1, 0], 30)
        probs = labels.astype(float)
        slots = np.repeat(np.arange(30), 2)
        xs, ys = metric_over_time(ScoredLabels(labels, probs, slots), 5, "gm")
        assert len(xs) == 26
        assert np.allclose(ys, 1.0, atol=1e-9)

    def test_constant_quality_predictor_flat_series(self):
        # predictor with fixed per-class score distributions; windows hold
        # ~400 pairs, so values stay within a 3-sigma bootstrap band
        rng = np.random.default_rng(77)
        slots = np.repeat(np.arange(200), 20)
        labels = rng.integers(0, 2, size=slots.size)
        probs = np.where(labels == 1, rng.beta(4, 2, slots.size), rng.beta(2, 4, slots.size))
        s = ScoredLabels(labels, probs, slots)
        global_auc = auc(s)
        xs, ys = metric_over_time(s, 20, "auc")
        boots = []
        idx = np.arange(slots.size)
        for _ in range(200):
            pick = rng.choice(idx, size=400)
            lab = labels[pick]
            if lab.sum() in (0, lab.size):
                continue
            boots.append(auc(ScoredLabels(lab, probs[pick])))
        sigma = np.std(boots)
        assert np.abs(ys - global_auc).max() < 3.5 * sigma

    def test_single_class_windows_skipped_for_auc(self):
        labels = np.array([1, 1, 0, 1])
        probs = np.array([0.9, 0.8, 0.1, 0.7])
        slots = np.array([0, 1, 2, 3])
        xs, ys = metric_over_time(ScoredLabels(labels, probs, slots), 2, "auc")
        assert xs.tolist() == [2, 3]  # windows (0,1) and with no negatives are skipped
        xs_gm, _ = metric_over_time(ScoredLabels(labels, probs, slots), 2, "gm")
        assert xs_gm.tolist() == [1, 2, 3]


class TestAccuracy:
    def test_per_class_accuracy(self):
        s = ScoredLabels([1, 1, 0, 0], [0.9, 0.3, 0.6, 0.2])
        overall, pos, neg = class_accuracy(s)
        assert overall == 0.5
        assert pos == 0.5
        assert neg == 0.5

    def test_threshold_strictly_greater(self):
        s = ScoredLabels([1, 0], [0.5, 0.5])
        _, pos, neg = class_accuracy(s)
        assert pos == 0.0 and neg == 1.0
