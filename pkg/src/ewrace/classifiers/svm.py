"""Soft-margin SVM by sequential minimal optimization, with Platt-scaled probabilities."""
from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from ..folds import stratified_folds
from .base import Classifier, ConvergenceWarning, Standardizer, warn

_TAU = 1e-12


def kernel_matrix(A, B, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


@njit(cache=True)
def _smo(K, y, C, eps, max_iter):
    """Dual coordinate pairs chosen by maximal violation and second-order gain.

    Returns ``(alpha, rho, iterations)``; the decision value is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        # i: maximal violating index in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v >= gmax:
                    if v > gmax:
                        gmax = v
                        i = t
        if i < 0:
            break
        gmin = np.inf
        j = -1
        best_obj = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                b = gmax - v
                if b > 0:
                    a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if a <= 0:
                        a = _TAU
                    obj = -(b * b) / a
                    if obj < best_obj:
                        best_obj = obj
                        j = t
        if gmax - gmin < eps or j < 0:
            break
        it += 1
        ai_old = alpha[i]
        aj_old = alpha[j]
        Qij = y[i] * y[j] * K[i, j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] + 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * dai + y[j] * K[t, j] * daj)
    # offset from free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    sfree = 0.0
    nfree = 0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            sfree += yg
            nfree += 1
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it


def fit_svm(X, y01, cost, gamma, kernel="rbf", tol=1e-3, max_iter=None):
    """Train on standardized ``X``; returns ``(coef, rho, converged)`` with coef = alpha*y."""
    y = np.where(np.asarray(y01) > 0, 1.0, -1.0)
    K = kernel_matrix(X, X, kernel, gamma)
    if max_iter is None:
        max_iter = max(10_000_000, 100 * len(y))
    alpha, rho, it = _smo(K, y, float(cost), float(tol), int(max_iter))
    return alpha * y, rho, it < max_iter


def platt_fit(dec, labels, max_iter: int = 100):
    """Sigmoid ``P(y=1|f) = 1 / (1 + exp(A f + B))`` by regularized-target Newton steps.

    Targets are shrunk toward the class priors as in Platt's method; the
    Newton iteration uses a backtracking line search.
    """
    dec = np.asarray(dec, dtype=float)
    lab = np.asarray(labels).astype(bool)
    prior1 = int(lab.sum())
    prior0 = lab.size - prior1
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(lab, hi, lo)
    A, B = 0.0, math.log((prior0 + 1.0) / (prior1 + 1.0))

    def objective(A, B):
        f = dec * A + B
        return np.sum(np.where(f >= 0, t * f + np.log1p(np.exp(-np.abs(f))),
                               (t - 1) * f + np.log1p(np.exp(-np.abs(f)))))

    fval = objective(A, B)
    for _ in range(max_iter):
        f = dec * A + B
        ef = np.exp(-np.abs(f))
        p = np.where(f >= 0, ef / (1 + ef), 1 / (1 + ef))
        q = 1 - p
        d2 = p * q
        h11 = 1e-12 + np.sum(dec * dec * d2)
        h22 = 1e-12 + np.sum(d2)
        h21 = np.sum(dec * d2)
        d1 = t - p
        g1 = np.sum(dec * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    return A, B


def platt_predict(dec, A, B):
    f = np.asarray(dec, dtype=float) * A + B
    ef = np.exp(-np.abs(f))
    return np.where(f >= 0, ef / (1 + ef), 1 / (1 + ef))


class SVM(Classifier):
    """Kernel SVM; probabilities from a sigmoid fitted to cross-validated decision values."""

    def fit(self, X, y, feature_names=None):
        p = self.params
        self.scale = Standardizer(X)
        Z = self.scale(X)
        self.X = Z
        self.coef, self.rho, self.converged = fit_svm(Z, y, p["cost"], p["gamma"], p["kernel"],
                                                      p["tol"])
        if not self.converged:
            warn("SMO hit its iteration limit", ConvergenceWarning)
        self.A, self.B = platt_fit(self._cv_decisions(Z, y), y)
        return self

    def _cv_decisions(self, Z, y):
        p = self.params
        k = min(p["platt_folds"], int(min(y.sum(), len(y) - y.sum())))
        if k < 2:
            return self.decision_function_std(Z)
        fold = stratified_folds(y, k, self.seed)
        dec = np.empty(len(y))
        for f in range(k):
            tr, te = fold != f, fold == f
            coef, rho, _ = fit_svm(Z[tr], y[tr], p["cost"], p["gamma"], p["kernel"], p["tol"])
            sv = coef != 0
            dec[te] = kernel_matrix(Z[te], Z[tr][sv], p["kernel"], p["gamma"]) @ coef[sv] - rho
        return dec

    def decision_function_std(self, Z):
        sv = self.coef != 0
        return kernel_matrix(Z, self.X[sv], self.params["kernel"], self.params["gamma"]) @ \
            self.coef[sv] - self.rho

    def decision_function(self, X):
        return self.decision_function_std(self.scale(X))

    def predict_proba(self, X):
        return platt_predict(self.decision_function(X), self.A, self.B)
