import math

import numpy as np
import pytest

from availpred.errors import DataError
from availpred.logreg import (
    AvailabilityModel,
    GaussianPrior,
    add_intercept,
    fit_batched,
    fit_laplace,
    gradient,
    hessian,
    load_model,
    log_posterior,
    predict,
    predict_proba,
    save_model,
)
from oracles import coordinate_search_map, fd_gradient, fd_hessian, naive_log_posterior


def random_instance(seed, n=200, d=5, beta_scale=2.0):
    rng = np.random.default_rng(seed)
    X = add_intercept(rng.normal(size=(n, d)))
    true_beta = rng.normal(scale=beta_scale, size=d + 1)
    p = 1.0 / (1.0 + np.exp(-(X @ true_beta)))
    y = (rng.random(n) < p).astype(float)
    return X, y


class TestLogPosterior:
    def test_intercept_only_balanced(self):
        X = np.ones((1000, 1))
        y = np.r_[np.ones(500), np.zeros(500)]
        prior = GaussianPrior.flat(1)
        assert log_posterior(np.zeros(1), X, y, prior) == pytest.approx(
            1000 * math.log(0.5), rel=1e-12
        )

    def test_perfect_prediction_limit(self):
        X = np.array([[1.0], [-1.0]])
        y = np.array([1.0, 0.0])
        prior = GaussianPrior.flat(1, alpha=1e14)
        lp = log_posterior(np.array([30.0]), X, y, prior)
        assert -1e-8 < lp < 0.0  # likelihood term approaches 0 from below

    def test_matches_naive_summation(self):
        X, y = random_instance(0, n=50, d=3)
        prior = GaussianPrior(np.full(4, 0.3), 2.5 * np.eye(4))
        beta = np.linspace(-1, 1, 4)
        assert log_posterior(beta, X, y, prior) == pytest.approx(
            naive_log_posterior(beta, X, y, prior), rel=1e-12
        )

    def test_finite_for_extreme_responses(self):
        X = np.array([[500.0], [-500.0]])
        y = np.array([0.0, 1.0])
        prior = GaussianPrior.flat(1)
        assert np.isfinite(log_posterior(np.array([1.0]), X, y, prior))


class TestDerivatives:
    def test_gradient_hessian_match_finite_differences(self):
        for seed in range(5):
            X, y = random_instance(seed, n=60, d=3)
            prior = GaussianPrior.flat(4)
            beta = np.random.default_rng(seed + 100).normal(size=4)
            f = lambda b: log_posterior(b, X, y, prior)
            g = gradient(beta, X, y, prior)
            g_fd = fd_gradient(f, beta, step=1e-6)
            assert np.abs(g - g_fd).max() / (1 + np.abs(g).max()) < 1e-5
            h = hessian(beta, X, y, prior)
            h_fd = fd_hessian(f, beta)
            assert np.abs(h - h_fd).max() / (1 + np.abs(h).max()) < 1e-4

    def test_balanced_symmetric_gradient_zero(self):
        X = add_intercept(np.r_[np.ones((50, 1)), -np.ones((50, 1))])
        y = np.r_[np.ones(50), np.zeros(50)]
        prior = GaussianPrior.flat(2)
        g = gradient(np.zeros(2), X, y, prior)
        assert abs(g[0]) < 1e-12

    def test_lambda_definition(self):
        X, y = random_instance(3, n=20, d=2)
        prior = GaussianPrior.flat(3)
        beta = np.array([0.3, -0.2, 0.6])
        lplus = 1.0 / (1.0 + np.exp(-(X @ beta)))
        h = hessian(beta, X, y, prior)
        expected = -(X.T @ (X * (lplus * (1 - lplus))[:, None]) + np.eye(3) / 1e4)
        assert np.allclose(h, expected, atol=1e-12)


class TestFitLaplace:
    def test_intercept_only_balanced_mode(self):
        X = np.ones((1000, 1))
        y = np.r_[np.ones(500), np.zeros(500)]
        post = fit_laplace(X, y, GaussianPrior.flat(1))
        assert abs(post.mean[0]) < 1e-3
        assert post.converged

    def test_mode_matches_coordinate_search(self):
        X, y = random_instance(21, n=200, d=2)
        prior = GaussianPrior.flat(3)
        post = fit_laplace(X, y, prior)
        oracle = coordinate_search_map(X, y, prior)
        assert np.abs(post.mean - oracle).max() < 1e-4

    def test_tight_prior_pins_mode(self):
        X, y = random_instance(5, n=100, d=2)
        m0 = np.array([0.5, -0.5, 0.25])
        prior = GaussianPrior(m0, 1e-8 * np.eye(3))
        post = fit_laplace(X, y, prior)
        assert np.abs(post.mean - m0).max() < 1e-3

    def test_covariance_is_inverse_negative_hessian(self):
        X, y = random_instance(9)
        prior = GaussianPrior.flat(6)
        post = fit_laplace(X, y, prior)
        product = post.cov @ (-hessian(post.mean, X, y, prior))
        assert np.abs(product - np.eye(6)).max() < 1e-8

    def test_row_permutation_invariance(self):
        X, y = random_instance(33)
        prior = GaussianPrior.flat(6)
        post = fit_laplace(X, y, prior)
        perm = np.random.default_rng(0).permutation(len(y))
        post_p = fit_laplace(X[perm], y[perm], prior)
        assert np.abs(post.mean - post_p.mean).max() < 1e-6

    def test_gradient_norms_decrease_and_final_below_tol(self):
        X, y = random_instance(17)
        post = fit_laplace(X, y, GaussianPrior.flat(6))
        assert post.converged
        assert post.final_grad_norm < 1e-6
        norms = np.array(post.grad_norms)
        assert (np.diff(norms) < 0).all()

    def test_unconverged_flag_on_tiny_budget(self):
        X, y = random_instance(2)
        post = fit_laplace(X, y, GaussianPrior.flat(6), max_iter=1)
        assert not post.converged
        assert post.iterations == 1

    def test_standardization_decision_invariance(self):
        rng = np.random.default_rng(44)
        raw = rng.random((2000, 3))  # features in (0,1) like the real ones
        beta = np.array([-1.0, 3.0, -2.0, 1.5])
        p = 1.0 / (1.0 + np.exp(-(add_intercept(raw) @ beta)))
        y = (rng.random(2000) < p).astype(float)
        means, sds = raw.mean(axis=0), raw.std(axis=0)
        scaled = (raw - means) / sds
        prior_raw = GaussianPrior.flat(4)
        prior_std = GaussianPrior.flat(4)
        post_raw = fit_laplace(add_intercept(raw), y, prior_raw)
        post_std = fit_laplace(add_intercept(scaled), y, prior_std)
        grid = rng.random((200, 3))
        p_raw = predict_proba(post_raw, add_intercept(grid))
        p_std = predict_proba(post_std, add_intercept((grid - means) / sds))
        assert np.abs(p_raw - p_std).max() < 1e-3


class TestBatched:
    def test_single_batch_identical(self):
        X, y = random_instance(1)
        prior = GaussianPrior.flat(6)
        a = fit_laplace(X, y, prior)
        b = fit_batched([(X, y)], prior)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.cov, b.cov)

    def test_two_halves_close_to_single_pass(self):
        X, y = random_instance(13, n=400)
        prior = GaussianPrior.flat(6)
        single = fit_laplace(X, y, prior)
        halves = fit_batched([(X[:200], y[:200]), (X[200:], y[200:])], prior)
        grid = add_intercept(np.random.default_rng(5).normal(size=(100, 5)))
        p1 = predict_proba(single, grid)
        p2 = predict_proba(halves, grid)
        assert np.abs(p1 - p2).max() < 0.02

    def test_empty_second_batch_is_noop(self):
        X, y = random_instance(4)
        prior = GaussianPrior.flat(6)
        one = fit_batched([(X, y)], prior)
        two = fit_batched([(X, y), (np.zeros((0, 6)), np.zeros(0))], prior)
        assert np.abs(one.mean - two.mean).max() < 1e-9
        assert np.abs(one.cov - two.cov).max() < 1e-9

    def test_dimension_mismatch(self):
        X, y = random_instance(4)
        with pytest.raises(DataError):
            fit_batched([(X, y), (X[:, :3], y)], GaussianPrior.flat(6))


class TestPredict:
    def _posterior(self, mean, cov):
        from availpred.logreg import GaussianPosterior

        return GaussianPosterior(
            mean=np.asarray(mean, dtype=float),
            cov=np.asarray(cov, dtype=float),
            converged=True,
            iterations=0,
            final_grad_norm=0.0,
        )

    def test_zero_mean_is_half(self):
        post = self._posterior([0.0], [[5.0]])
        assert predict(post, [1.0]) == 0.5

    def test_certain_linear_response(self):
        post = self._posterior([2.0], [[0.0 + 1e-300]])
        assert predict(post, [1.0]) == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-9)

    def test_variance_shrinks_toward_half(self):
        # s^2 = 8/pi makes the shrink factor exactly 1/sqrt(2)
        post = self._posterior([2.0], [[8.0 / math.pi]])
        expected = 1.0 / (1.0 + math.exp(-2.0 / math.sqrt(2.0)))
        assert predict(post, [1.0]) == pytest.approx(expected, abs=1e-9)

    def test_monotone_in_mean_and_variance(self):
        for m1, m2 in [(0.1, 0.5), (1.0, 2.0)]:
            p1 = self._posterior([m1], [[1e-12]])
            p2 = self._posterior([m2], [[1e-12]])
            assert predict(p2, [1.0]) > predict(p1, [1.0])
        for s1, s2 in [(0.1, 1.0), (1.0, 10.0)]:
            p1 = self._posterior([2.0], [[s1]])
            p2 = self._posterior([2.0], [[s2]])
            assert predict(p2, [1.0]) < predict(p1, [1.0])
            assert predict(p2, [1.0]) > 0.5

    def test_strictly_inside_unit_interval(self):
        post = self._posterior([1000.0], [[1e-12]])
        assert 0.0 < predict(post, [1.0]) < 1.0
        post = self._posterior([-1000.0], [[1e-12]])
        assert 0.0 < predict(post, [1.0]) < 1.0

    def test_batch_matches_scalar(self):
        X, y = random_instance(8)
        post = fit_laplace(X, y, GaussianPrior.flat(6))
        rows = X[:7]
        batch = predict_proba(post, rows)
        singles = [predict(post, r) for r in rows]
        assert np.allclose(batch, singles, atol=1e-15)


class TestModelFile:
    def test_round_trip(self, tmp_path):
        X, y = random_instance(6)
        post = fit_laplace(X, y, GaussianPrior.flat(6))
        model = AvailabilityModel(
            posterior=post,
            standardized=True,
            feature_means=np.linspace(0.1, 0.5, 5),
            feature_sds=np.linspace(0.01, 0.05, 5),
        )
        path = tmp_path / "model.txt"
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(back.posterior.mean, post.mean)
        assert np.array_equal(back.posterior.cov, post.cov)
        assert back.standardized is True
        assert np.array_equal(back.feature_means, model.feature_means)
        assert np.array_equal(back.feature_sds, model.feature_sds)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("m=1,2\n")
        with pytest.raises(DataError):
            load_model(path)
