"""Signal evaluation under a policymaker's preference between error types."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

# largest denominator of mu for which in-sample losses use integer arithmetic
MAX_EXACT_DENOMINATOR = 10**6


class DegenerateClassError(ValueError):
    """Raised when one of the two classes is absent."""


@dataclass(frozen=True)
class ContingencyCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ContingencyCounts") -> "ContingencyCounts":
        return ContingencyCounts(self.tp + other.tp, self.fp + other.fp,
                                 self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class Preference:
    """Relative weight ``mu`` on missing crises versus ``1 - mu`` on false alarms."""

    mu: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")

    @cached_property
    def rational(self) -> tuple[int, int] | None:
        """``(a, b)`` with ``mu = a / b`` if ``mu``'s shortest decimal form has a small denominator.

        In-sample losses are then integer ratios and come out correctly
        rounded (``1 - 0.8`` is not ``0.2`` in binary floating point).
        """
        f = Fraction(repr(float(self.mu)))
        if f.denominator > MAX_EXACT_DENOMINATOR:
            return None
        return f.numerator, f.denominator


@dataclass(frozen=True)
class EvaluationResult:
    counts: ContingencyCounts
    t1: float
    t2: float
    loss: float
    ua: float
    ur: float
    auc: float
    tau_star: float

    def as_row(self) -> dict:
        c = self.counts
        return {"ur": self.ur, "ua": self.ua, "auc": self.auc, "tau": self.tau_star,
                "t1": self.t1, "t2": self.t2, "loss": self.loss,
                "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn}


def contingency(signals, labels) -> ContingencyCounts:
    """Tally signals against pre-crisis (1) / tranquil (0) labels."""
    s = np.asarray(signals).astype(bool)
    c = np.asarray(labels).astype(bool)
    if s.shape != c.shape or s.ndim != 1:
        raise ValueError(f"signals and labels must be equal-length 1d, got {s.shape} and {c.shape}")
    if s.size == 0:
        raise ValueError("nothing to evaluate")
    return ContingencyCounts(tp=int(np.sum(s & c)), fp=int(np.sum(s & ~c)),
                             fn=int(np.sum(~s & c)), tn=int(np.sum(~s & ~c)))


def _class_shares(counts: ContingencyCounts, p1: float | None) -> tuple[float, float]:
    if counts.tp + counts.fn == 0 or counts.fp + counts.tn == 0:
        raise DegenerateClassError("degenerate class sizes: both classes must be present")
    if p1 is None:
        n = counts.n
        return (counts.tp + counts.fn) / n, (counts.fp + counts.tn) / n
    if not 0.0 < p1 < 1.0:
        raise DegenerateClassError(f"degenerate class sizes: P1={p1}")
    return p1, 1.0 - p1


def _exact_terms(counts: ContingencyCounts, pref: Preference, p1):
    """Integer numerators of the trivial-policy loss and the loss, and their denominator."""
    r = pref.rational
    if p1 is not None or r is None:
        return None
    a, b = r
    tp, fp, fn, tn = (int(v) for v in (counts.tp, counts.fp, counts.fn, counts.tn))
    return min(a * (tp + fn), (b - a) * (fp + tn)), a * fn + (b - a) * fp, b * (tp + fp + fn + tn)


def error_rates(counts: ContingencyCounts) -> tuple[float, float]:
    """Type I (missed crises) and type II (false alarms) error rates."""
    t1 = counts.fn / (counts.tp + counts.fn) if counts.tp + counts.fn else math.nan
    t2 = counts.fp / (counts.fp + counts.tn) if counts.fp + counts.tn else math.nan
    return t1, t2


def loss(counts: ContingencyCounts, pref: Preference = Preference(),
         p1: float | None = None) -> float:
    """Preference-weighted loss ``mu*T1*P1 + (1-mu)*T2*P2``.

    ``p1`` overrides the crisis-class share; by default it is taken from
    ``counts`` itself.
    """
    P1, P2 = _class_shares(counts, p1)
    exact = _exact_terms(counts, pref, p1)
    if exact:
        return exact[1] / exact[2]
    t1, t2 = error_rates(counts)
    mu = pref.mu
    return mu * t1 * P1 + (1 - mu) * t2 * P2


def usefulness(counts: ContingencyCounts, pref: Preference = Preference(),
               p1: float | None = None) -> tuple[float, float]:
    """Absolute and relative Usefulness ``(ua, ur)``.

    ``ua`` is the loss saved relative to the better of always and never
    signalling; ``ur`` expresses it as a share of the loss of that trivial
    policy, so a perfect model has ``ur = 1``.
    """
    P1, P2 = _class_shares(counts, p1)
    exact = _exact_terms(counts, pref, p1)
    if exact:
        base, lo, scale = exact
        return (base - lo) / scale, ((base - lo) / base if base > 0 else math.nan)
    base = min(pref.mu * P1, (1 - pref.mu) * P2)
    ua = base - loss(counts, pref, p1)
    ur = ua / base if base > 0 else math.nan
    return ua, ur


def candidate_thresholds(scores) -> np.ndarray:
    """Midpoints of adjacent distinct sorted scores, plus 0 and 1."""
    u = np.unique(np.asarray(scores, dtype=float))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate([[0.0], mids, [1.0]]))


def _scan(scores: np.ndarray, labels: np.ndarray, pref: Preference,
          candidates: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Loss at every candidate threshold (signal rule ``score > tau``).

    Returns the candidates and a key per candidate that orders them like
    their loss: the integer loss numerator when ``mu`` is rational, else
    the loss itself.
    """
    c = labels.astype(bool)
    n = c.size
    n1 = int(c.sum())
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateClassError("degenerate class sizes: both classes must be present")
    if candidates is None:
        u = np.unique(scores)
        candidates = np.unique(np.concatenate([[min(0.0, u[0])], (u[:-1] + u[1:]) / 2.0,
                                               [max(1.0, u[-1])]]))
    # per candidate: number of positives / negatives with score > tau
    pos = np.sort(scores[c])
    neg = np.sort(scores[~c])
    tp = n1 - np.searchsorted(pos, candidates, side="right")
    fp = n0 - np.searchsorted(neg, candidates, side="right")
    fn = n1 - tp
    r = pref.rational
    if r is not None:
        a, b = r
        return candidates, a * fn.astype(np.int64) + (b - a) * fp.astype(np.int64)
    mu = pref.mu
    # same operation order as loss() so that values agree bit for bit
    P1 = (tp + fn) / n
    P2 = (fp + (n0 - fp)) / n
    t1 = fn / (tp + fn)
    t2 = fp / (fp + (n0 - fp))
    losses = mu * t1 * P1 + (1 - mu) * t2 * P2
    return candidates, losses


def best_threshold(scores, labels, pref: Preference = Preference()) -> tuple[float, float]:
    """Loss-minimizing threshold on arbitrary real scores, and its Ur.

    Candidates are the midpoints between adjacent distinct scores together
    with thresholds below and above every score. Among equal minimal losses
    the largest threshold wins.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    cands, losses = _scan(s, y, pref)
    best = np.flatnonzero(losses == losses.min())[-1]
    tau = float(cands[best])
    _, ur = usefulness(contingency(s > tau, y), pref)
    return tau, ur


def optimize_threshold(probs, labels, pref: Preference = Preference()) -> tuple[float, float]:
    """Optimal threshold ``tau*`` on probabilities and the Ur it attains.

    Signals are ``p > tau``. Candidates are ``{0, 1}`` and the midpoints of
    adjacent distinct sorted probabilities; ties in minimal loss go to the
    largest threshold (fewest false alarms).

    Returns
    -------
    tau_star : float
    ur : float
        Relative Usefulness of the signals ``p > tau_star``.
    """
    p = np.asarray(probs, dtype=float)
    if p.size and (p.min() < 0.0 or p.max() > 1.0 or not np.all(np.isfinite(p))):
        raise ValueError("probabilities must lie in [0, 1]")
    y = np.asarray(labels).astype(bool)
    if p.shape != y.shape:
        raise ValueError("probabilities and labels differ in length")
    cands, losses = _scan(p, y, pref, candidate_thresholds(p))
    best = np.flatnonzero(losses == losses.min())[-1]
    tau = float(cands[best])
    _, ur = usefulness(contingency(p > tau, y), pref)
    return tau, ur


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """False- and true-positive rates over all thresholds, from (0,0) to (1,1)."""
    fp, tp, n0, n1 = _roc_counts(scores, labels)
    return fp / n0, tp / n1


def _roc_counts(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateClassError("degenerate class sizes: AUC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # one ROC point per distinct score, so tied scores form one diagonal step
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.r_[0, np.cumsum(y)[last]]
    fp = np.r_[0, np.cumsum(~y)[last]]
    return fp, tp, n0, n1


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve by the trapezoidal rule.

    Tied scores contribute a diagonal segment, which is the same as counting
    tied positive/negative pairs as half-concordant.
    """
    fp, tp, n0, n1 = _roc_counts(scores, labels)
    # twice the area in integer units, then one division
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2.0 * n0 * n1)


def evaluate(signals, labels, pref: Preference = Preference(), scores=None,
             tau_star: float = math.nan, p1: float | None = None) -> EvaluationResult:
    """Full evaluation record for a set of signals (and optionally scores for AUC)."""
    counts = contingency(signals, labels)
    return evaluate_counts(counts, pref, auc=roc_auc(scores, labels) if scores is not None
                           else math.nan, tau_star=tau_star, p1=p1)


def evaluate_counts(counts: ContingencyCounts, pref: Preference = Preference(),
                    auc: float = math.nan, tau_star: float = math.nan,
                    p1: float | None = None) -> EvaluationResult:
    t1, t2 = error_rates(counts)
    L = loss(counts, pref, p1)
    ua, ur = usefulness(counts, pref, p1)
    return EvaluationResult(counts, t1, t2, L, ua, ur, auc, tau_star)
