"""Aggregating several methods: best-of, majority vote and (weighted) mean probabilities."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

AGGREGATE_KINDS = ("best_of", "vote", "mean", "weighted_mean")
WEIGHT_MEASURES = ("ur", "auc")


@dataclass(frozen=True)
class AggregateSpec:
    """One aggregation rule; ``weight_measure`` only matters for ``weighted_mean``."""

    kind: str
    weight_measure: str = "ur"

    def __post_init__(self):
        if self.kind not in AGGREGATE_KINDS:
            raise ValueError(f"unknown aggregate {self.kind!r}; expected one of {AGGREGATE_KINDS}")
        if self.weight_measure not in WEIGHT_MEASURES:
            raise ValueError(f"weight_measure must be one of {WEIGHT_MEASURES}")

    @property
    def label(self) -> str:
        if self.kind == "weighted_mean" and self.weight_measure != "ur":
            return f"weighted_mean_{self.weight_measure}"
        return self.kind


def best_index(in_sample_ur: Sequence[float]) -> int:
    """Position of the largest in-sample Ur; the first one on ties, NaNs never win."""
    u = np.asarray(in_sample_ur, dtype=float)
    if u.size == 0:
        raise ValueError("best_of needs at least one method")
    if np.all(np.isnan(u)):
        return 0
    return int(np.nanargmax(u))


def best_of(in_sample_ur: Sequence[float], out_signals) -> np.ndarray:
    """Out-of-sample signals of the method with the best in-sample Ur.

    Parameters
    ----------
    in_sample_ur : sequence of float, length M
    out_signals : array of shape (M, N)

    Returns
    -------
    ndarray of shape (N,)
    """
    return np.asarray(out_signals)[best_index(in_sample_ur)]


def vote(signals) -> np.ndarray:
    """Majority vote: 1 where strictly more than half of the methods signal."""
    s = np.asarray(signals, dtype=float)
    if s.ndim != 2 or s.shape[0] == 0:
        raise ValueError("vote needs an (M, N) signal matrix with M >= 1")
    return (s.mean(axis=0) > 0.5).astype(np.int8)


def vote_share(signals) -> np.ndarray:
    """Fraction of methods signalling per observation; ``vote`` is ``vote_share > 0.5``."""
    return np.asarray(signals, dtype=float).mean(axis=0)


def normalized_weights(weights: Sequence[float] | None, m: int) -> np.ndarray:
    """Performance weights normalized to sum to one.

    Methods with a negative (or undefined) weight get zero weight. If no
    method is left, or all weights are zero, every method gets ``1/m``.
    """
    if weights is None:
        return np.full(m, 1.0 / m)
    w = np.asarray(weights, dtype=float)
    if w.shape != (m,):
        raise ValueError(f"expected {m} weights, got shape {w.shape}")
    w = np.where(np.isfinite(w) & (w >= 0), w, 0.0)
    total = w.sum()
    if total <= 0:
        return np.full(m, 1.0 / m)
    return w / total


def aggregate_probs(probs, weights: Sequence[float] | None = None) -> np.ndarray:
    """Convex combination of method probabilities, ``sum_m w_m p_m / sum_m w_m``.

    Parameters
    ----------
    probs : array of shape (M, N)
        Calibrated probabilities of each method.
    weights : sequence of float, optional
        In-sample performance per method. ``None`` gives the arithmetic mean;
        see :func:`normalized_weights` for how negative weights are treated.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("aggregate_probs needs an (M, N) probability matrix with M >= 1")
    if weights is None:
        return p.mean(axis=0)
    w = normalized_weights(weights, p.shape[0])
    kept = w > 0
    # equal weights take the plain mean so the result is exactly the arithmetic mean
    if np.all(w[kept] == w[kept][0]):
        return p[kept].mean(axis=0)
    # a convex combination, but rounding can overshoot 1 by an ulp
    return np.clip(w @ p, 0.0, 1.0)
