"""Gaussian generative classifiers: LDA, QDA and naive Bayes."""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .base import Classifier, InsufficientDataError, RegularizationWarning, warn

_MAX_COND = 1e12


def _regularized_cholesky(S: np.ndarray, what: str):
    """Cholesky factor of ``S``, adding ``eps*I`` (eps = 1e-6 trace/G) if near-singular."""
    g = S.shape[0]
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= eig[-1] / _MAX_COND or eig[0] <= 0:
        eps = 1e-6 * np.trace(S) / g
        if eps <= 0:
            eps = 1e-6
        warn(f"{what} covariance is near-singular; adding {eps:.3g}*I", RegularizationWarning)
        S = S + eps * np.eye(g)
    return cho_factor(S, lower=True)


def _log_gauss_kernel(X, mean, chol):
    # -0.5 * Mahalanobis distance and -0.5 * log det, per row
    d = X - mean
    maha = np.sum(d * cho_solve(chol, d.T).T, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    return -0.5 * maha - 0.5 * logdet


class LDA(Classifier):
    """Gaussian classes with a shared (pooled, maximum-likelihood) covariance."""

    def fit(self, X, y, feature_names=None):
        c = y.astype(bool)
        self.prior1 = c.mean()
        self.means = (X[~c].mean(axis=0), X[c].mean(axis=0))
        D = np.where(c[:, None], X - self.means[1], X - self.means[0])
        self.cov = D.T @ D / len(y)
        self.chol = _regularized_cholesky(self.cov, "pooled")
        return self

    def predict_proba(self, X):
        l0 = _log_gauss_kernel(X, self.means[0], self.chol) + np.log(1 - self.prior1)
        l1 = _log_gauss_kernel(X, self.means[1], self.chol) + np.log(self.prior1)
        return expit(l1 - l0)


class QDA(Classifier):
    """Gaussian classes with separate covariances; each class needs more than G rows."""

    def fit(self, X, y, feature_names=None):
        c = y.astype(bool)
        g = X.shape[1]
        for cls, n in ((0, int((~c).sum())), (1, int(c.sum()))):
            if n <= g:
                raise InsufficientDataError(
                    f"qda: class {cls} has {n} observations, needs more than {g} features")
        self.prior1 = c.mean()
        self.means, self.chols = [], []
        for mask in (~c, c):
            Xc = X[mask]
            m = Xc.mean(axis=0)
            S = (Xc - m).T @ (Xc - m) / len(Xc)
            self.means.append(m)
            self.chols.append(_regularized_cholesky(S, "class"))
        return self

    def predict_proba(self, X):
        l0 = _log_gauss_kernel(X, self.means[0], self.chols[0]) + np.log(1 - self.prior1)
        l1 = _log_gauss_kernel(X, self.means[1], self.chols[1]) + np.log(self.prior1)
        return expit(l1 - l0)


class NaiveBayes(Classifier):
    """Independent Gaussian features per class; priors are training frequencies."""

    def fit(self, X, y, feature_names=None):
        c = y.astype(bool)
        floor = self.params["var_floor"]
        self.prior1 = c.mean()
        self.mu = np.stack([X[~c].mean(axis=0), X[c].mean(axis=0)])
        self.var = np.maximum(np.stack([X[~c].var(axis=0), X[c].var(axis=0)]), floor)
        return self

    def predict_proba(self, X):
        ll = []
        for k, prior in ((0, 1 - self.prior1), (1, self.prior1)):
            ll.append(np.log(prior) - 0.5 * np.sum(
                np.log(2 * np.pi * self.var[k]) + (X - self.mu[k]) ** 2 / self.var[k], axis=1))
        return expit(ll[1] - ll[0])
