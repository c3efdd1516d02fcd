"""Univariate signal extraction: one indicator, one threshold."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..evaluation import Preference, best_threshold
from .base import Classifier


@dataclass(frozen=True)
class IndicatorRank:
    indicator: str
    column: int
    direction: int  # +1 signals on high values, -1 on low values
    tau: float
    ur: float


def _rank_rows(X, y, pref: Preference, names: Sequence[str]) -> list[IndicatorRank]:
    rows = []
    for j in range(X.shape[1]):
        best = None
        for sign in (1, -1):
            tau, ur = best_threshold(sign * X[:, j], y, pref)
            if best is None or ur > best.ur:
                best = IndicatorRank(names[j], j, sign, sign * tau, ur)
        rows.append(best)
    return rows


def signal_extraction_rank(X, y, pref: Preference = Preference(),
                           feature_names: Sequence[str] | None = None) -> list[IndicatorRank]:
    """Optimal single-indicator threshold and in-sample Ur for every column.

    Both signalling directions are tried per indicator and the better one
    kept. Rows come back sorted by decreasing Ur, column order breaking ties.

    Parameters
    ----------
    X : array of shape (N, G)
        Raw indicator values.
    y : array of shape (N,)
        0/1 pre-crisis labels; both classes must be present.
    pref : Preference
    feature_names : sequence of str, optional
        Defaults to ``x0, x1, ...``.

    Returns
    -------
    list of IndicatorRank
        ``tau`` is on the original indicator scale; a high-side indicator
        signals when ``x > tau``, a low-side one when ``x < tau``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("need at least one indicator column")
    names = list(feature_names) if feature_names is not None else \
        [f"x{j}" for j in range(X.shape[1])]
    rows = _rank_rows(X, np.asarray(y), pref, names)
    return sorted(rows, key=lambda r: -r.ur)


class SignalExtraction(Classifier):
    """Thresholds a single indicator.

    The indicator is fixed by ``params["indicator"]`` (column index or name)
    or, when that is ``None``, the one with the best in-sample Ur. Its
    "probability" is the in-sample percentile of the directed indicator
    value, so it ranks observations the same way the indicator does.
    """

    def fit(self, X, y, feature_names=None):
        pref = Preference(self.params["mu"])
        names = list(feature_names) if feature_names is not None else \
            [f"x{j}" for j in range(X.shape[1])]
        choice = self.params["indicator"]
        if choice is None:
            cols = range(X.shape[1])
        else:
            cols = [self._resolve(choice, names, X.shape[1])]
        rows = _rank_rows(X[:, list(cols)], y, pref, [names[j] for j in cols])
        best = max(rows, key=lambda r: r.ur)  # first maximum in column order
        self.column = list(cols)[best.column]
        self.indicator = names[self.column]
        self.direction = best.direction
        self.tau = best.tau
        self.in_sample_ur = best.ur
        self.reference = np.sort(self.direction * X[:, self.column])
        return self

    @staticmethod
    def _resolve(choice, names, g):
        if isinstance(choice, str):
            if choice not in names:
                raise ValueError(f"signal_extraction: unknown indicator {choice!r}")
            return names.index(choice)
        j = int(choice)
        if not 0 <= j < g:
            raise ValueError(f"signal_extraction: indicator index {j} out of range")
        return j

    def predict_proba(self, X):
        v = self.direction * X[:, self.column]
        return np.searchsorted(self.reference, v, side="right") / self.reference.size
