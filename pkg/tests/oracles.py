"""Independent reference implementations used only by tests.

These deliberately avoid the library's computational paths: plain Python
loops, finite differences, and derivative-free coordinate search over the
log posterior.
"""

import math

import numpy as np


def naive_log_posterior(beta, X, y, prior):
    """Per-row summation with math.log; no vectorization, no logaddexp."""
    total = 0.0
    for xi, yi in zip(X, y):
        a = float(np.dot(xi, beta))
        p = 1.0 / (1.0 + math.exp(-a))
        total += yi * math.log(p) + (1 - yi) * math.log(1.0 - p)
    diff = np.asarray(beta) - prior.mean
    total -= 0.5 * float(diff @ np.linalg.inv(prior.cov) @ diff)
    return total


def fd_gradient(f, beta, step=1e-6):
    beta = np.asarray(beta, dtype=float)
    out = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = step
        out[j] = (f(beta + e) - f(beta - e)) / (2 * step)
    return out


def fd_hessian(f, beta, step=1e-4):
    """Central second differences of a scalar function."""
    beta = np.asarray(beta, dtype=float)
    d = beta.size
    out = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = step
            ej[j] = step
            out[i, j] = (
                f(beta + ei + ej) - f(beta + ei - ej) - f(beta - ei + ej) + f(beta - ei - ej)
            ) / (4 * step * step)
    return 0.5 * (out + out.T)


def coordinate_search_map(X, y, prior, span=20.0, sweeps=200, tol=1e-9):
    """Derivative-free MAP oracle: per-coordinate golden-section search.

    The log posterior is strictly concave, so iterated exact line searches
    along the axes converge to the global mode. The objective is evaluated
    with this module's own formula, independent of the library path.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    beta = prior.mean.astype(float).copy()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    s0inv = np.linalg.inv(prior.cov)

    def value(b):
        a = X @ b
        diff = b - prior.mean
        return float(y @ a - np.logaddexp(0.0, a).sum() - 0.5 * diff @ s0inv @ diff)

    def line_max(b, j, lo, hi):
        # golden-section maximization of the coordinate slice
        a_, b_ = lo, hi
        c = b_ - invphi * (b_ - a_)
        d_ = a_ + invphi * (b_ - a_)
        bc, bd = b.copy(), b.copy()
        bc[j], bd[j] = c, d_
        fc, fd_ = value(bc), value(bd)
        while abs(b_ - a_) > 1e-10:
            if fc > fd_:
                b_, d_, fd_ = d_, c, fc
                c = b_ - invphi * (b_ - a_)
                bc[j] = c
                fc = value(bc)
            else:
                a_, c, fc = c, d_, fd_
                d_ = a_ + invphi * (b_ - a_)
                bd[j] = d_
                fd_ = value(bd)
        return (a_ + b_) / 2.0

    for _ in range(sweeps):
        moved = 0.0
        for j in range(beta.size):
            lo, hi = beta[j] - span, beta[j] + span
            new = line_max(beta.copy(), j, lo, hi)
            moved = max(moved, abs(new - beta[j]))
            beta[j] = new
        if moved < tol:
            break
    return beta


def pairwise_auc(labels, probs):
    """Exhaustive positive/negative pair comparison with half-credit ties."""
    pos = [p for l, p in zip(labels, probs) if l == 1]
    neg = [p for l, p in zip(labels, probs) if l == 0]
    score = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                score += 1.0
            elif p == q:
                score += 0.5
    return score / (len(pos) * len(neg))
