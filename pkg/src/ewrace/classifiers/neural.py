"""Single-hidden-layer networks: gradient-trained ANN and the extreme learning machine."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .base import Classifier, Standardizer


def _unpack(w: np.ndarray, g: int, h: int):
    W1 = w[: (g + 1) * h].reshape(g + 1, h)
    W2 = w[(g + 1) * h:]
    return W1, W2


def n_weights(g: int, h: int) -> int:
    return (g + 1) * h + h + 1


def ann_forward(w, X, hidden):
    W1, W2 = _unpack(w, X.shape[1], hidden)
    H = expit(X @ W1[:-1] + W1[-1])
    a = H @ W2[:-1] + W2[-1]
    return H, a


def ann_objective(w, X, y, hidden, decay):
    """Cross-entropy summed over rows plus ``decay`` times the squared weights."""
    _, a = ann_forward(w, X, hidden)
    ce = np.sum(np.logaddexp(0.0, a) - y * a)
    return ce + decay * np.dot(w, w)


def ann_objective_grad(w, X, y, hidden, decay):
    """Objective of :func:`ann_objective` and its analytic gradient."""
    g = X.shape[1]
    W1, W2 = _unpack(w, g, hidden)
    H, a = ann_forward(w, X, hidden)
    ce = np.sum(np.logaddexp(0.0, a) - y * a)
    d_out = expit(a) - y
    gW2 = np.r_[H.T @ d_out, d_out.sum()]
    d_hid = d_out[:, None] * W2[:-1][None, :] * H * (1.0 - H)
    gW1 = np.vstack([X.T @ d_hid, d_hid.sum(axis=0)])
    grad = np.r_[gW1.ravel(), gW2] + 2.0 * decay * w
    return ce + decay * np.dot(w, w), grad


class ANN(Classifier):
    """Logistic hidden and output units, trained by full-batch gradient descent.

    The step adapts each iteration: it grows by 5% after a decrease of the
    objective and halves (rejecting the step) otherwise.
    """

    def fit(self, X, y, feature_names=None):
        p = self.params
        self.scale = Standardizer(X)
        Z = self.scale(X)
        yf = y.astype(float)
        n = len(yf)
        rng = np.random.default_rng(self.seed)
        w = rng.uniform(-0.5, 0.5, n_weights(Z.shape[1], p["hidden"]))
        f, grad = ann_objective_grad(w, Z, yf, p["hidden"], p["decay"])
        step = 1.0
        self.converged = False
        for _ in range(p["max_iter"]):
            if np.max(np.abs(grad)) / n < 1e-8:
                self.converged = True
                break
            cand = w - step * grad / n
            f_new, g_new = ann_objective_grad(cand, Z, yf, p["hidden"], p["decay"])
            if f_new < f:
                w, f, grad = cand, f_new, g_new
                step *= 1.05
            else:
                step *= 0.5
        self.w = w
        self.objective = f
        return self

    def predict_proba(self, X):
        _, a = ann_forward(self.w, self.scale(X), self.params["hidden"])
        return expit(a)


def _activation(name):
    return np.tanh if name == "tansig" else expit


class ELM(Classifier):
    """Random input layer, output weights by ridge least squares on the 0/1 labels."""

    def fit(self, X, y, feature_names=None):
        p = self.params
        self.scale = Standardizer(X)
        rng = np.random.default_rng(self.seed)
        g, h = X.shape[1], p["hidden"]
        self.W = rng.uniform(-1.0, 1.0, (g, h))
        self.b = rng.uniform(-1.0, 1.0, h)
        H = self.hidden(X)
        self.beta = ridge_solve(H, y.astype(float), p["ridge"])
        return self

    def hidden(self, X):
        return _activation(self.params["activation"])(self.scale(X) @ self.W + self.b)

    def raw_output(self, X):
        return self.hidden(X) @ self.beta

    def predict_proba(self, X):
        return np.clip(self.raw_output(X), 0.0, 1.0)


def ridge_solve(H: np.ndarray, t: np.ndarray, ridge: float) -> np.ndarray:
    """``argmin ||H b - t||^2 + ridge ||b||^2`` via least squares on the augmented system."""
    h = H.shape[1]
    A = np.vstack([H, np.sqrt(ridge) * np.eye(h)])
    rhs = np.r_[t, np.zeros(h)]
    return np.linalg.lstsq(A, rhs, rcond=None)[0]
