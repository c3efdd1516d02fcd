"""Logistic regression by IRLS and the L1-penalized (LASSO) logit."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .base import Classifier, ConvergenceWarning, Standardizer, warn


def _deviance(y, eta):
    # -2 log-likelihood, written to stay finite for large |eta|
    return 2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta)


def fit_logit(X: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-8):
    """Maximum-likelihood logit with intercept by iteratively reweighted least squares.

    Returns ``(beta, converged)`` with ``beta[0]`` the intercept. Convergence
    is a relative deviance change below ``tol``; otherwise the iterate with
    the lowest deviance is returned.
    """
    Z = np.column_stack([np.ones(len(y)), X])
    y = y.astype(float)
    p1 = y.mean()
    beta = np.zeros(Z.shape[1])
    beta[0] = np.log(p1 / (1 - p1))
    eta = Z @ beta
    dev = _deviance(y, eta)
    best = (dev, beta.copy())
    for _ in range(max_iter):
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-10)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        beta = np.linalg.lstsq(Z * sw[:, None], z * sw, rcond=None)[0]
        eta = Z @ beta
        new_dev = _deviance(y, eta)
        if new_dev < best[0]:
            best = (new_dev, beta.copy())
        if abs(new_dev - dev) / (abs(new_dev) + 0.1) < tol:
            return beta, True
        dev = new_dev
    return best[1], False


class Logit(Classifier):
    def fit(self, X, y, feature_names=None):
        self.beta, self.converged = fit_logit(X, y, self.params["max_iter"], self.params["tol"])
        if not self.converged:
            warn("logit IRLS did not converge; returning best iterate", ConvergenceWarning)
        return self

    def predict_proba(self, X):
        return expit(self.beta[0] + X @ self.beta[1:])


def _soft(z, g):
    return np.sign(z) * max(abs(z) - g, 0.0)


def fit_logit_lasso(X: np.ndarray, y: np.ndarray, lam: float, tol: float = 1e-7,
                    max_iter: int = 1000):
    """L1-penalized logit on already-standardized features.

    Minimizes ``-loglik / N + lam * sum(|beta_j|)`` (intercept unpenalized)
    with an outer quadratic approximation of the likelihood and cyclic
    coordinate descent inside. Returns ``(beta, converged)``.
    """
    n, g = X.shape
    y = y.astype(float)
    p1 = y.mean()
    b0 = np.log(p1 / (1 - p1))
    b = np.zeros(g)
    x2 = None
    converged = False
    for _ in range(max_iter):
        eta = b0 + X @ b
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-5)
        z = eta + (y - mu) / w
        x2 = (w[:, None] * X * X).sum(axis=0) / n
        b0_old, b_old = b0, b.copy()
        r = z - b0 - X @ b
        for _inner in range(max_iter):
            delta = 0.0
            d0 = np.sum(w * r) / np.sum(w)
            b0 += d0
            r -= d0
            delta = max(delta, abs(d0))
            for j in range(g):
                if x2[j] == 0:
                    continue
                bj = b[j]
                num = np.dot(w * X[:, j], r) / n + x2[j] * bj
                b[j] = _soft(num, lam) / x2[j]
                if b[j] != bj:
                    r -= X[:, j] * (b[j] - bj)
                    delta = max(delta, abs(b[j] - bj))
            if delta < tol:
                break
        change = max(abs(b0 - b0_old), np.max(np.abs(b - b_old)) if g else 0.0)
        if change < tol:
            converged = True
            break
    return np.r_[b0, b], converged


class LogitLasso(Classifier):
    def fit(self, X, y, feature_names=None):
        self.scale = Standardizer(X)
        beta, self.converged = fit_logit_lasso(self.scale(X), y, self.params["lam"],
                                               self.params["tol"], self.params["max_iter"])
        if not self.converged:
            warn("LASSO logit did not converge; returning last iterate", ConvergenceWarning)
        self.beta_std = beta
        # coefficients on the original feature scale
        slopes = beta[1:] / self.scale.sd
        self.beta = np.r_[beta[0] - np.dot(slopes, self.scale.mean), slopes]
        return self

    def predict_proba(self, X):
        return expit(self.beta_std[0] + self.scale(X) @ self.beta_std[1:])
