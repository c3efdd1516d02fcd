"""Resampling inference for model performance and model output.

Replicate statistics are summarized by their mean, standard error, a
percentile interval and a resampled-t critical value. Pairs of summaries are
compared with a difference-of-means test whose critical value is the
average of the two resampled ones.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .classifiers import MethodSpec
from .ensembles import AGGREGATE_KINDS
from .evaluation import (
    DegenerateClassError,
    EvaluationResult,
    Preference,
    contingency,
    evaluate_counts,
    roc_auc,
    usefulness,
)
from .experiments import (
    RecursiveConfig,
    as_aggregates,
    kfold_race,
    method_labels,
    prepare_recursive,
    quarter_cells,
    recursive_quarters,
    training_mask,
)
from .panel_data import CrisisEvent, LabeledPanel, RawPanel
from .parallel import map_ordered

BOOTSTRAP_ATTEMPTS = 100


class NoSignificantObservations(ValueError):
    """Every observation's probability is indistinguishable from its threshold."""


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def order_index(S: int, position: float) -> int:
    """1-based ordered position, rounded half-up and clamped to ``[1, S]``."""
    return min(max(_round_half_up(position), 1), S)


@dataclass(frozen=True)
class ResampleSummary:
    """Mean, standard error, percentile interval and critical value of S replicates."""

    mean: float
    se: float
    ci_lo: float
    ci_hi: float
    t_star: float
    S: int
    alpha: float
    n_dropped: int = 0

    def as_row(self, prefix: str = "") -> dict:
        return {f"{prefix}mean": self.mean, f"{prefix}se": self.se, f"{prefix}ci_lo": self.ci_lo,
                f"{prefix}ci_hi": self.ci_hi, f"{prefix}t_star": self.t_star}


def _nan_summary(S, alpha) -> ResampleSummary:
    return ResampleSummary(math.nan, math.nan, math.nan, math.nan, math.nan, S, alpha)


def resampled_t_critical(replicates, ses, theta_hat: float, alpha: float = 0.1
                         ) -> tuple[float, int]:
    """Critical value from the studentized replicates ``(theta_s - theta_hat) / se_s``.

    ``t*`` is the ``|t|`` found at ordered position ``S(1 - alpha)`` (same
    rounding rule as the percentile interval). Replicates with ``se_s = 0``
    are dropped; their count is returned. If all are dropped ``t*`` is 0.

    Returns
    -------
    (t_star, n_dropped)
    """
    r = np.asarray(replicates, dtype=float)
    s = np.broadcast_to(np.asarray(ses, dtype=float), r.shape)
    keep = s > 0
    dropped = int(r.size - keep.sum())
    if not keep.any():
        return 0.0, dropped
    t = np.sort(np.abs((r[keep] - theta_hat) / s[keep]))
    return float(t[order_index(t.size, t.size * (1 - alpha)) - 1]), dropped


def resample_summary(replicates, alpha: float = 0.1, ses=None,
                     theta_hat: float | None = None) -> ResampleSummary:
    """Summarize replicate values of a scalar estimator.

    Parameters
    ----------
    replicates : sequence of float
        ``S >= 2`` replicate values; NaNs (failed replicates) are ignored.
    alpha : float
        The interval has level ``1 - alpha``; its limits are the ordered
        replicates at positions ``S*alpha/2`` and ``S*(1 - alpha/2)``,
        rounded half-up and clamped to ``[1, S]``.
    ses : sequence of float, optional
        Per-replicate standard errors for studentizing. Without them every
        replicate is studentized by the overall resampled standard error.
    theta_hat : float, optional
        Centre for studentizing; defaults to the replicate mean.

    Returns
    -------
    ResampleSummary
        ``se`` uses the ``S - 1`` denominator.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    r = np.asarray(replicates, dtype=float)
    if r.size < 2:
        raise ValueError("need at least 2 replicates")
    ok = np.isfinite(r)
    if ses is not None:
        ses = np.asarray(ses, dtype=float)[ok]
    r = r[ok]
    S = r.size
    if S < 2:
        return _nan_summary(S, alpha)
    if r.min() == r.max():
        # summation rounding would otherwise leave a spurious non-zero spread
        mean, se = float(r[0]), 0.0
    else:
        mean = float(np.mean(r))
        se = float(np.sqrt(np.sum((r - mean) ** 2) / (S - 1)))
    srt = np.sort(r)
    lo = float(srt[order_index(S, S * alpha / 2) - 1])
    hi = float(srt[order_index(S, S * (1 - alpha / 2)) - 1])
    centre = mean if theta_hat is None else theta_hat
    t_star, dropped = resampled_t_critical(r, se if ses is None else ses, centre, alpha)
    return ResampleSummary(mean, se, lo, hi, t_star, S, alpha, dropped)


class Verdict(str, enum.Enum):
    GREATER = ">"
    LESS = "<"
    NOT_SIGNIFICANT = "·"

    def flipped(self) -> "Verdict":
        return {Verdict.GREATER: Verdict.LESS, Verdict.LESS: Verdict.GREATER}.get(self, self)


def comparison_margin(i: ResampleSummary, j: ResampleSummary) -> float:
    """``|mean_i - mean_j| - (t*_i + t*_j)/2 * sqrt(se_i^2 + se_j^2)``; positive means significant."""
    crit = (i.t_star + j.t_star) / 2.0
    return abs(i.mean - j.mean) - crit * math.sqrt(i.se ** 2 + j.se ** 2)


def mean_comparison(i: ResampleSummary, j: ResampleSummary) -> Verdict:
    """Whether ``i`` is significantly greater than, less than, or not different from ``j``."""
    m = comparison_margin(i, j)
    if not m > 0:
        return Verdict.NOT_SIGNIFICANT
    return Verdict.GREATER if i.mean > j.mean else Verdict.LESS


@dataclass
class SignificanceMatrix:
    """Pairwise verdicts; ``cells[a][b]`` compares row method ``a`` with column ``b``."""

    names: list[str]
    cells: list[list[Verdict]]
    measure: str
    alpha: float

    @classmethod
    def from_summaries(cls, names: Sequence[str], summaries: Sequence[ResampleSummary],
                       measure: str, alpha: float) -> "SignificanceMatrix":
        m = len(names)
        cells = [[Verdict.NOT_SIGNIFICANT] * m for _ in range(m)]
        for a in range(m):
            for b in range(a + 1, m):
                v = mean_comparison(summaries[a], summaries[b])
                cells[a][b] = v
                cells[b][a] = v.flipped()
        return cls(list(names), cells, measure, alpha)

    def verdict(self, a: str, b: str) -> Verdict:
        return self.cells[self.names.index(a)][self.names.index(b)]

    def is_antisymmetric(self) -> bool:
        m = len(self.names)
        return all(self.cells[a][a] is Verdict.NOT_SIGNIFICANT for a in range(m)) and all(
            self.cells[a][b] is self.cells[b][a].flipped() for a in range(m) for b in range(m))

    def rows(self) -> list[list[str]]:
        """Header row plus one row per method, cells as ``>``, ``<`` or ``·``."""
        out = [[""] + self.names]
        for n, row in zip(self.names, self.cells):
            out.append([n] + [v.value for v in row])
        return out


def first_lower_significant(names: Sequence[str], summaries: Sequence[ResampleSummary],
                            matrix: SignificanceMatrix) -> dict[str, str]:
    """For each method, the first method below it in the mean ranking that it beats significantly.

    Methods with no such competitor map to ``""``.
    """
    order = sorted(range(len(names)), key=lambda i: _rank_key(summaries[i].mean))
    out = {}
    for pos, i in enumerate(order):
        out[names[i]] = ""
        for j in order[pos + 1:]:
            if matrix.cells[i][j] is Verdict.GREATER:
                out[names[i]] = names[j]
                break
    return out


def _rank_key(x: float) -> float:
    return -x if not math.isnan(x) else math.inf


# -- output uncertainty ------------------------------------------------------------------

@dataclass
class OutputBand:
    """Per-observation probability and threshold distributions of one method.

    ``flag`` is +1 where the probability is significantly above the
    threshold, -1 where significantly below and 0 otherwise.
    """

    method: str
    countries: np.ndarray
    quarters: np.ndarray
    labels: np.ndarray
    usable: np.ndarray
    p_mean: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    tau_mean: np.ndarray
    tau_lo: np.ndarray
    tau_hi: np.ndarray
    flag: np.ndarray
    alpha: float

    def __len__(self):
        return len(self.flag)

    @property
    def signals(self) -> np.ndarray:
        return (self.p_mean > self.tau_mean).astype(np.int8)

    def subset(self, mask) -> "OutputBand":
        mask = np.asarray(mask)
        arrays = {k: getattr(self, k)[mask] for k in _BAND_ARRAYS}
        return OutputBand(self.method, alpha=self.alpha, **arrays)

    def for_country(self, code: str) -> "OutputBand":
        return self.subset(self.countries == code)


_BAND_ARRAYS = ("countries", "quarters", "labels", "usable", "p_mean", "p_lo", "p_hi",
                "tau_mean", "tau_lo", "tau_hi", "flag")


def output_band(method: str, P, T, countries, quarters, labels, usable,
                alpha: float = 0.1) -> OutputBand:
    """Band from replicate probabilities ``P`` and thresholds ``T`` (both S x n).

    Each observation's flag is :func:`mean_comparison` of the probability
    summary against the threshold summary. Columns without any finite
    replicate should be removed beforehand.
    """
    P = np.asarray(P, dtype=float)
    T = np.asarray(T, dtype=float)
    n = P.shape[1]
    out = {k: np.empty(n) for k in ("p_mean", "p_lo", "p_hi", "tau_mean", "tau_lo", "tau_hi")}
    flag = np.zeros(n, dtype=np.int8)
    for c in range(n):
        sp = resample_summary(P[:, c], alpha)
        st = resample_summary(T[:, c], alpha)
        out["p_mean"][c], out["p_lo"][c], out["p_hi"][c] = sp.mean, sp.ci_lo, sp.ci_hi
        out["tau_mean"][c], out["tau_lo"][c], out["tau_hi"][c] = st.mean, st.ci_lo, st.ci_hi
        v = mean_comparison(sp, st)
        flag[c] = 1 if v is Verdict.GREATER else (-1 if v is Verdict.LESS else 0)
    return OutputBand(method, np.asarray(countries), np.asarray(quarters),
                      np.asarray(labels).astype(np.int8), np.asarray(usable).astype(bool),
                      flag=flag, alpha=alpha, **out)


def significant_only_evaluation(band: OutputBand, pref: Preference = Preference(),
                                p1: float | None = None) -> EvaluationResult:
    """Evaluate the averaged signals on the observations with a significant flag only.

    Raises
    ------
    NoSignificantObservations
        If no usable observation is flagged.
    """
    keep = band.usable & (band.flag != 0)
    if not keep.any():
        raise NoSignificantObservations("no significant observations")
    return _evaluate_band(band.subset(keep), pref, p1)


def band_evaluation(band: OutputBand, pref: Preference = Preference(),
                    p1: float | None = None) -> EvaluationResult:
    """Evaluate the averaged signals on every usable observation."""
    return _evaluate_band(band.subset(band.usable), pref, p1)


def _evaluate_band(b: OutputBand, pref, p1) -> EvaluationResult:
    counts = contingency(b.signals, b.labels)
    y = b.labels.astype(bool)
    auc = roc_auc(b.p_mean, y) if y.any() and not y.all() else math.nan
    tau = float(np.mean(b.tau_mean)) if len(b) else math.nan
    return evaluate_counts(counts, pref, auc=auc, tau_star=tau, p1=p1)


# -- performance uncertainty: repeated cross-validation ----------------------------------

@dataclass
class RobustResult:
    """Replicate performance of every method plus its summaries and significance matrices."""

    protocol: str
    names: list[str]
    kinds: dict[str, str]
    ur: np.ndarray  # S x M replicate Ur
    auc: np.ndarray  # S x M replicate AUC
    alpha: float
    seed: int
    summaries: dict[str, dict[str, ResampleSummary]] = field(default_factory=dict)
    matrices: dict[str, SignificanceMatrix] = field(default_factory=dict)
    bands: dict[str, OutputBand] = field(default_factory=dict)
    point: dict[str, EvaluationResult] = field(default_factory=dict)
    p1: float | None = None

    def __post_init__(self):
        for measure, R in (("ur", self.ur), ("auc", self.auc)):
            sums = [resample_summary(R[:, m], self.alpha) for m in range(len(self.names))]
            self.summaries[measure] = dict(zip(self.names, sums))
            if measure == "auc":
                # aggregates without an AUC (the vote) stay out of the AUC matrix
                keep = [i for i, s in enumerate(sums) if not math.isnan(s.mean)]
                names = [self.names[i] for i in keep]
                sums = [sums[i] for i in keep]
            else:
                names = self.names
            self.matrices[measure] = SignificanceMatrix.from_summaries(names, sums, measure,
                                                                       self.alpha)

    @property
    def S(self) -> int:
        return self.ur.shape[0]

    def ranking(self, measure: str = "ur") -> list[dict]:
        """Methods by decreasing mean ``measure``, with SE, interval, t* and the
        first lower-ranked method that is significantly worse."""
        mat = self.matrices[measure]
        sums = [self.summaries[measure][n] for n in mat.names]
        lower = first_lower_significant(mat.names, sums, mat)
        rows = []
        for n in mat.names:
            row = {"method": n, "kind": self.kinds[n]}
            for meas in ("ur", "auc"):
                row.update(self.summaries[meas][n].as_row(f"{meas}_"))
            row["first_lower_significant"] = lower[n]
            rows.append(row)
        return sorted(rows, key=lambda r: _rank_key(r[f"{measure}_mean"]))

    def significant_only(self, pref: Preference = Preference()) -> list[dict]:
        """Full-sample versus significant-only evaluation of every banded method."""
        rows = []
        for name, band in self.bands.items():
            full = band_evaluation(band, pref, self.p1)
            try:
                sig = significant_only_evaluation(band, pref, self.p1)
            except (NoSignificantObservations, DegenerateClassError) as exc:
                warnings.warn(f"{name}: {exc}", stacklevel=2)
                sig = None
            rows.append({"method": name, "ur_full": full.ur, "auc_full": full.auc,
                         "n_full": full.counts.n,
                         "ur_significant": sig.ur if sig else math.nan,
                         "auc_significant": sig.auc if sig else math.nan,
                         "n_significant": sig.counts.n if sig else 0})
        return rows


def _cv_replicate(s, methods, X, y, pref, K, seed, aggregates, feature_names, keep_outputs):
    r = kfold_race(methods, X, y, pref, K, seed + s, aggregates, feature_names)
    perf = {n: (o.result.ur, o.result.auc) for n, o in r.outcomes.items()}
    outs = {n: (o.probs, o.taus) for n, o in r.outcomes.items()} if keep_outputs else None
    kinds = {n: o.kind for n, o in r.outcomes.items()}
    return perf, outs, kinds


def repeated_cv_performance(methods: Sequence[MethodSpec], X, y,
                            pref: Preference = Preference(), K: int = 10, S: int = 500,
                            seed: int = 0, alpha: float = 0.1, aggregates=AGGREGATE_KINDS,
                            feature_names=None, workers: int | None = 1,
                            keep_outputs: bool = False, countries=None,
                            quarters=None) -> RobustResult:
    """Repeat the K-fold race ``S`` times with fold seeds ``seed, seed+1, ...``.

    Returns Ur and AUC summaries per method and aggregate, significance
    matrices at ``alpha`` and, with ``keep_outputs``, an output band per
    method (the vote excepted) built from each observation's out-of-sample
    probability and threshold across replicates.
    """
    if S < 2:
        raise ValueError("need at least 2 replicates")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int8)
    job = partial(_cv_replicate, methods=methods, X=X, y=y, pref=pref, K=K, seed=seed,
                  aggregates=aggregates, feature_names=feature_names, keep_outputs=keep_outputs)
    reps = map_ordered(job, range(S), workers)
    names = method_labels(methods) + [a.label for a in as_aggregates(aggregates)]
    kinds = {}
    for _, _, k in reps:
        kinds.update(k)
    names = [n for n in names if n in kinds]
    ur = np.full((S, len(names)), np.nan)
    auc = np.full((S, len(names)), np.nan)
    for s, (perf, _, _) in enumerate(reps):
        for m, n in enumerate(names):
            if n in perf:
                ur[s, m], auc[s, m] = perf[n]
    res = RobustResult("kfold", names, kinds, ur, auc, alpha, seed)
    # every observation is in-sample in K - 1 folds, so the in-sample crisis share is y's
    res.p1 = float(y.mean())
    if keep_outputs:
        n_obs = len(y)
        cs = np.asarray(countries) if countries is not None else np.full(n_obs, "")
        qs = np.asarray(quarters) if quarters is not None else np.arange(n_obs)
        for n in names:
            if n == "vote":
                continue
            P = np.full((S, n_obs), np.nan)
            T = np.full((S, n_obs), np.nan)
            for s, (_, outs, _) in enumerate(reps):
                if n in outs:
                    P[s], T[s] = outs[n]
            res.bands[n] = output_band(n, P, T, cs, qs, y, np.ones(n_obs, bool), alpha)
    return res


# -- performance and output uncertainty: recursive bootstrap -----------------------------

def bootstrap_indices(rng: np.random.Generator, rows: np.ndarray, y: np.ndarray):
    """Resample ``rows`` with replacement until both classes appear (at most 100 draws).

    Returns ``None`` if every draw was single-class.
    """
    for _ in range(BOOTSTRAP_ATTEMPTS):
        idx = rows[rng.integers(0, rows.size, rows.size)]
        lab = y[idx]
        if lab.any() and not lab.all():
            return idx
    return None


def _bootstrap_replicate(s, methods, labels, data, cfg, pref, aggregates, quarters, seed):
    rng = np.random.default_rng(seed + s)
    out = {}
    skipped = []
    for q in quarters:
        rows = np.flatnonzero(training_mask(data, q))
        if rows.size == 0:
            continue
        idx = bootstrap_indices(rng, rows, data.y)
        if idx is None:
            skipped.append(q)
            continue
        cells, _, test, _ = quarter_cells(q, methods, labels, data, cfg, pref, aggregates, idx)
        for name, c in cells.items():
            out.setdefault(name, []).append((test, c.out_probs, c.tau))
    return out, skipped


def bootstrap_recursive(methods: Sequence[MethodSpec], raw: RawPanel,
                        events: Sequence[CrisisEvent], pref: Preference = Preference(),
                        cfg: RecursiveConfig = RecursiveConfig(), S: int = 500, seed: int = 0,
                        alpha: float = 0.1, aggregates=AGGREGATE_KINDS, features=None,
                        workers: int | None = 1) -> RobustResult:
    """Bootstrapped recursive race.

    In replicate ``s`` (random stream ``seed + s``) and at every quarter,
    the available in-sample rows are resampled with replacement, each method
    is refitted and its threshold re-optimized, and probabilities and
    thresholds are emitted for the quarter's observations. Per replicate the
    pooled predictions give Ur and AUC; per observation the replicate
    probabilities and thresholds give an output band. ``point`` holds the
    robust (replicate-averaged) classifier of every method.
    """
    data = prepare_recursive(raw, events, cfg, features)
    return bootstrap_recursive_data(methods, data, pref, cfg, S, seed, alpha, aggregates,
                                    workers)


def bootstrap_recursive_data(methods, data: LabeledPanel, pref: Preference = Preference(),
                             cfg: RecursiveConfig = RecursiveConfig(), S: int = 500,
                             seed: int = 0, alpha: float = 0.1, aggregates=AGGREGATE_KINDS,
                             workers: int | None = 1) -> RobustResult:
    """:func:`bootstrap_recursive` on an already prepared panel."""
    if S < 2:
        raise ValueError("need at least 2 replicates")
    labels = method_labels(methods)
    aggs = as_aggregates(aggregates)
    quarters = recursive_quarters(data, cfg)
    job = partial(_bootstrap_replicate, methods=methods, labels=labels, data=data, cfg=cfg,
                  pref=pref, aggregates=aggs, quarters=quarters, seed=seed)
    reps = map_ordered(job, range(S), workers)
    n_skipped = sum(len(sk) for _, sk in reps)
    if n_skipped:
        warnings.warn(f"{n_skipped} replicate-quarters skipped: bootstrap kept drawing a "
                      "single class", stacklevel=2)
    # prediction rows, in quarter order, are the same in every replicate
    test_rows = [np.flatnonzero(data.complete & (data.quarters == q)) for q in quarters]
    rows = np.concatenate(test_rows) if test_rows else np.empty(0, dtype=np.int64)
    pos = np.full(len(data), -1)
    pos[rows] = np.arange(rows.size)
    # in-sample crisis share per prediction row, from the non-resampled training set
    p1_row = np.full(rows.size, np.nan)
    for q, t in zip(quarters, test_rows):
        tr = training_mask(data, q)
        if tr.any():
            p1_row[pos[t]] = data.y[tr].mean()
    names = [n for n in labels + [a.label for a in aggs] if any(n in r for r, _ in reps)]
    kinds = {n: ("method" if n in labels else "aggregate") for n in names}
    ur = np.full((S, len(names)), np.nan)
    auc = np.full((S, len(names)), np.nan)
    P = {n: np.full((S, rows.size), np.nan) for n in names}
    T = {n: np.full((S, rows.size), np.nan) for n in names}
    for s, (out, _) in enumerate(reps):
        for n, parts in out.items():
            for test, probs, tau in parts:
                P[n][s, pos[test]] = probs
                T[n][s, pos[test]] = tau
    usable = data.usable[rows]
    y = data.y[rows]
    for m, n in enumerate(names):
        for s in range(S):
            ok = usable & np.isfinite(P[n][s])
            ur[s, m], auc[s, m] = _pooled_scores(P[n][s, ok], T[n][s, ok], y[ok],
                                                 p1_row[ok], pref, n != "vote")
    res = RobustResult("recursive", names, kinds, ur, auc, alpha, seed)
    ev = usable
    res.p1 = float(np.nanmean(p1_row[ev])) if ev.any() else None
    for n in names:
        seen = np.isfinite(P[n]).any(axis=0)
        if n != "vote":
            res.bands[n] = output_band(n, P[n][:, seen], T[n][:, seen], data.countries[rows][seen],
                                       data.quarters[rows][seen], y[seen], usable[seen], alpha)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            p_mean = np.nanmean(P[n][:, seen], axis=0)
            t_mean = np.nanmean(T[n][:, seen], axis=0)
        ok = usable[seen]
        try:
            counts = contingency(p_mean[ok] > t_mean[ok], y[seen][ok])
            a = roc_auc(p_mean[ok], y[seen][ok]) if n != "vote" else math.nan
            res.point[n] = evaluate_counts(counts, pref, auc=a, tau_star=float(np.mean(t_mean)),
                                           p1=float(np.mean(p1_row[seen][ok])))
        except DegenerateClassError:
            pass
    return res


def _pooled_scores(probs, taus, y, p1s, pref, with_auc) -> tuple[float, float]:
    if y.size == 0 or y.all() or not y.any():
        return math.nan, math.nan
    _, ur = usefulness(contingency(probs > taus, y), pref, float(np.mean(p1s)))
    return ur, (roc_auc(probs, y) if with_auc else math.nan)


__all__ = [
    "BOOTSTRAP_ATTEMPTS", "NoSignificantObservations", "OutputBand", "ResampleSummary",
    "RobustResult", "SignificanceMatrix", "Verdict", "band_evaluation", "bootstrap_indices",
    "bootstrap_recursive", "comparison_margin", "first_lower_significant", "mean_comparison",
    "order_index", "output_band", "repeated_cv_performance", "resample_summary",
    "resampled_t_critical", "significant_only_evaluation",
]
