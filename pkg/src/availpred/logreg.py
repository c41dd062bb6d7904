"""Bayesian logistic regression via the Laplace approximation.

The posterior over the weight vector (intercept + five features) is
approximated by a Gaussian placed at the posterior mode, found by damped
Newton-Raphson ascent of the log posterior; the covariance is the inverse
of the negative Hessian at the mode,

    S = (X' diag(l+ (1 - l+)) X + S0^-1)^-1.

Note the PLUS sign in front of S0^-1: it follows from differentiating the
Gaussian log prior twice, and matches the Newton update used here.

Predictions marginalize the weight uncertainty with the standard probit
style shrinkage sigma((1 + pi s^2 / 8)^(-1/2) m), where m and s^2 are the
mean and variance of the linear response under the posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import expit

from .errors import DataError

DEFAULT_ALPHA = 1.0e4
DEFAULT_GRAD_TOL = 1.0e-6
DEFAULT_MAX_ITER = 100
MAX_HALVINGS = 20

# predictions are clamped inside the open interval (0, 1)
_P_LO = 1.0e-300
_P_HI = 1.0 - 1.0e-16


def add_intercept(features: np.ndarray) -> np.ndarray:
    """Prepend the constant-one intercept column."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    ones = np.ones((features.shape[0], 1))
    return np.hstack([ones, features])


def _check_cov(cov: np.ndarray, what: str):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DataError(f"{what} covariance must be square")
    scale = max(1.0, float(np.abs(cov).max()))
    if np.abs(cov - cov.T).max() > 1e-10 * scale:
        raise DataError(f"{what} covariance is not symmetric")
    try:
        cho_factor(cov)
    except LinAlgError:
        raise DataError(f"{what} covariance is not positive definite") from None
    return cov


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = _check_cov(self.cov, "prior")
        if cov.shape[0] != mean.shape[0]:
            raise DataError("prior mean/covariance dimensions disagree")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def flat(cls, dim: int, alpha: float = DEFAULT_ALPHA) -> "GaussianPrior":
        """The default zero-mean, alpha*I prior."""
        return cls(np.zeros(dim), alpha * np.eye(dim))

    def cov_inverse(self) -> np.ndarray:
        return cho_solve(cho_factor(self.cov), np.eye(self.cov.shape[0]))


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray
    converged: bool
    iterations: int
    final_grad_norm: float
    grad_norms: tuple = ()

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = _check_cov(self.cov, "posterior")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def as_prior(self) -> GaussianPrior:
        return GaussianPrior(self.mean, self.cov)


def _as_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise DataError("X must be 2-D")
    if X.shape[0] != y.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
    return X, y


def log_posterior(beta, X, y, prior: GaussianPrior) -> float:
    """Log likelihood plus log prior, additive constants dropped.

    Stable for large linear responses: finite for |x.beta| up to ~1e300.
    """
    X, y = _as_xy(X, y)
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] != X.shape[1]:
        raise DataError("beta dimension does not match X")
    a = X @ beta
    # y*log(sigma(a)) + (1-y)*log(1-sigma(a)) == y*a - log(1 + e^a)
    ll = float(np.sum(y * a - np.logaddexp(0.0, a)))
    diff = beta - prior.mean
    quad = float(diff @ cho_solve(cho_factor(prior.cov), diff))
    return ll - 0.5 * quad


def gradient(beta, X, y, prior: GaussianPrior) -> np.ndarray:
    X, y = _as_xy(X, y)
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] != X.shape[1]:
        raise DataError("beta dimension does not match X")
    lplus = expit(X @ beta)
    s0inv_diff = cho_solve(cho_factor(prior.cov), beta - prior.mean)
    return X.T @ (y - lplus) - s0inv_diff


def hessian(beta, X, y, prior: GaussianPrior) -> np.ndarray:
    """Hessian of the log posterior: -(X' Lambda X + S0^-1)."""
    X, y = _as_xy(X, y)
    beta = np.asarray(beta, dtype=float)
    lplus = expit(X @ beta)
    lam = lplus * (1.0 - lplus)
    s0inv = prior.cov_inverse()
    return -(X.T @ (X * lam[:, None]) + s0inv)


def fit_laplace(
    X,
    y,
    prior: GaussianPrior,
    grad_tol: float = DEFAULT_GRAD_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GaussianPosterior:
    """Gaussian approximation of the posterior, mode found by Newton ascent.

    Stops when the infinity norm of the gradient drops below ``grad_tol``;
    if ``max_iter`` updates were not enough, the result is still returned
    with ``converged=False``. A full Newton step that would lower the log
    posterior is halved (at most MAX_HALVINGS times), which keeps the
    ascent monotone at negligible cost.
    """
    X, y = _as_xy(X, y)
    dim = X.shape[1]
    if prior.mean.shape[0] != dim:
        raise DataError(f"prior dimension {prior.mean.shape[0]} != design dimension {dim}")
    s0_chol = cho_factor(prior.cov)
    s0inv = cho_solve(s0_chol, np.eye(dim))

    beta = prior.mean.copy()
    current_lp = log_posterior(beta, X, y, prior)
    grad_norms = []
    converged = False
    iterations = 0

    for _ in range(max_iter):
        lplus = expit(X @ beta)
        grad = X.T @ (y - lplus) - cho_solve(s0_chol, beta - prior.mean)
        gnorm = float(np.abs(grad).max()) if dim else 0.0
        grad_norms.append(gnorm)
        if gnorm < grad_tol:
            converged = True
            break
        lam = lplus * (1.0 - lplus)
        system = X.T @ (X * lam[:, None]) + s0inv
        try:
            chol = cho_factor(system)
        except LinAlgError:
            raise DataError(
                "Newton system matrix is not positive definite "
                f"(iteration {iterations}, |grad|={gnorm:.3g})"
            ) from None
        step = cho_solve(chol, grad)
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = beta + scale * step
            candidate_lp = log_posterior(candidate, X, y, prior)
            if candidate_lp >= current_lp:
                break
            scale *= 0.5
        beta = beta + scale * step
        current_lp = log_posterior(beta, X, y, prior)
        iterations += 1
    else:
        converged = False

    lplus = expit(X @ beta)
    grad = X.T @ (y - lplus) - cho_solve(s0_chol, beta - prior.mean)
    final_norm = float(np.abs(grad).max()) if dim else 0.0
    if final_norm < grad_tol:
        converged = True
    if not grad_norms or grad_norms[-1] != final_norm:
        grad_norms.append(final_norm)

    lam = lplus * (1.0 - lplus)
    system = X.T @ (X * lam[:, None]) + s0inv
    try:
        cov = cho_solve(cho_factor(system), np.eye(dim))
    except LinAlgError:
        raise DataError("final Newton system matrix is not positive definite") from None
    cov = 0.5 * (cov + cov.T)
    return GaussianPosterior(
        mean=beta,
        cov=cov,
        converged=converged,
        iterations=iterations,
        final_grad_norm=final_norm,
        grad_norms=tuple(grad_norms),
    )


def fit_batched(
    batches,
    prior: GaussianPrior,
    grad_tol: float = DEFAULT_GRAD_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GaussianPosterior:
    """Fold batches left to right, threading each posterior in as the next prior.

    ``batches`` is a sequence of (X, y) pairs sharing the feature dimension
    (and, when standardized, the standardization statistics). An empty batch
    leaves the running posterior unchanged.
    """
    current = prior
    posterior = None
    all_converged = True
    total_iterations = 0
    dim = prior.mean.shape[0]
    for X, y in batches:
        X, y = _as_xy(X, y)
        if X.shape[1] != dim:
            raise DataError(f"batch dimension {X.shape[1]} != prior dimension {dim}")
        posterior = fit_laplace(X, y, current, grad_tol=grad_tol, max_iter=max_iter)
        all_converged &= posterior.converged
        total_iterations += posterior.iterations
        current = posterior.as_prior()
    if posterior is None:
        raise DataError("fit_batched needs at least one batch")
    return GaussianPosterior(
        mean=posterior.mean,
        cov=posterior.cov,
        converged=all_converged,
        iterations=total_iterations,
        final_grad_norm=posterior.final_grad_norm,
        grad_norms=posterior.grad_norms,
    )


def predict(posterior: GaussianPosterior, x) -> float:
    """Predictive probability for one intercept-augmented feature vector."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != posterior.mean.shape[0]:
        raise DataError("feature vector dimension does not match posterior")
    m_a = float(x @ posterior.mean)
    s2_a = float(x @ posterior.cov @ x)
    return float(_shrunk_sigmoid(np.array([m_a]), np.array([s2_a]))[0])


def predict_proba(posterior: GaussianPosterior, X) -> np.ndarray:
    """Vectorized ``predict`` over rows of an intercept-augmented matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != posterior.mean.shape[0]:
        raise DataError("feature matrix dimension does not match posterior")
    m_a = X @ posterior.mean
    s2_a = np.einsum("ij,jk,ik->i", X, posterior.cov, X)
    return _shrunk_sigmoid(m_a, s2_a)


def _shrunk_sigmoid(m_a: np.ndarray, s2_a: np.ndarray) -> np.ndarray:
    s2_a = np.maximum(s2_a, 0.0)  # tiny negatives from round-off
    p = expit(m_a / np.sqrt(1.0 + np.pi * s2_a / 8.0))
    return np.clip(p, _P_LO, _P_HI)


# ---------------------------------------------------------------------------
# Trained model = posterior + the feature statistics it expects at test time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AvailabilityModel:
    posterior: GaussianPosterior
    standardized: bool
    feature_means: np.ndarray
    feature_sds: np.ndarray

    def transform(self, raw_features: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw_features, dtype=float)
        if not self.standardized:
            return raw
        constant = self.feature_sds <= 0
        scale = np.where(constant, 1.0, self.feature_sds)
        shift = np.where(constant, 0.0, self.feature_means)
        return (raw - shift) / scale

    def predict_features(self, raw_features: np.ndarray) -> np.ndarray:
        """Predictive probabilities from raw (unstandardized) feature rows."""
        return predict_proba(self.posterior, add_intercept(self.transform(raw_features)))


def save_model(model: AvailabilityModel, path) -> None:
    post = model.posterior
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("m=" + ",".join(f"{v:.17g}" for v in post.mean) + "\n")
        fh.write("S=" + ",".join(f"{v:.17g}" for v in post.cov.ravel()) + "\n")
        fh.write(f"standardize={int(model.standardized)}\n")
        fh.write("means=" + ",".join(f"{v:.17g}" for v in model.feature_means) + "\n")
        fh.write("sds=" + ",".join(f"{v:.17g}" for v in model.feature_sds) + "\n")


def load_model(path) -> AvailabilityModel:
    fields = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataError(f"{path}:{lineno}: malformed model line")
            fields[key] = value
    try:
        mean = np.array([float(v) for v in fields["m"].split(",")])
        cov_flat = np.array([float(v) for v in fields["S"].split(",")])
        standardized = bool(int(fields["standardize"]))
        means = np.array([float(v) for v in fields["means"].split(",")])
        sds = np.array([float(v) for v in fields["sds"].split(",")])
    except (KeyError, ValueError):
        raise DataError(f"{path}: missing or malformed model fields") from None
    dim = mean.shape[0]
    if cov_flat.shape[0] != dim * dim:
        raise DataError(f"{path}: covariance has {cov_flat.shape[0]} entries, expected {dim*dim}")
    posterior = GaussianPosterior(
        mean=mean,
        cov=cov_flat.reshape(dim, dim),
        converged=True,
        iterations=0,
        final_grad_norm=0.0,
    )
    return AvailabilityModel(
        posterior=posterior, standardized=standardized, feature_means=means, feature_sds=sds
    )
