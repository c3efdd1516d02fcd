"""Horse-race protocols: K-fold cross-validation, grid search and recursive real-time backtests."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Mapping, Sequence

import numpy as np

from .classifiers import InsufficientDataError, MethodSpec, calibrate_ecdf, fit
from .ensembles import AGGREGATE_KINDS, AggregateSpec, aggregate_probs, best_index, vote_share
from .evaluation import (
    DegenerateClassError,
    EvaluationResult,
    Preference,
    contingency,
    evaluate_counts,
    optimize_threshold,
    roc_auc,
    usefulness,
)
from .folds import stratified_folds
from .panel_data import (
    CrisisEvent,
    Horizon,
    LabeledPanel,
    RawPanel,
    apply_publication_lags,
    build_dataset,
    parse_quarter,
)
from .parallel import map_ordered

FOLD_ATTEMPTS = 100
# failures that skip a fit rather than abort the race
FIT_ERRORS = (InsufficientDataError, DegenerateClassError, np.linalg.LinAlgError)


@dataclass
class Cell:
    """One method (or aggregate) trained on one training set.

    ``in_probs`` are the calibrated in-sample probabilities in training-row
    order, ``tau`` the threshold optimized on them and ``ur_in`` its Ur.
    ``out_probs`` are the calibrated probabilities of the prediction rows.
    """

    in_probs: np.ndarray
    tau: float
    ur_in: float
    out_probs: np.ndarray
    chosen: str | None = None  # best_of: the method it copied

    def in_auc(self, y) -> float:
        return roc_auc(self.in_probs, y)


def fit_cell(spec: MethodSpec, Xtr, ytr, Xte, pref: Preference,
             feature_names: Sequence[str] | None = None) -> Cell:
    """Fit, calibrate in-sample by ECDF, optimize ``tau*`` in-sample and predict ``Xte``."""
    model = fit(spec, Xtr, ytr, feature_names)
    in_cal = calibrate_ecdf(model.in_sample_probs, model.train_probs)
    tau, ur = optimize_threshold(in_cal, ytr, pref)
    out = model.predict_calibrated(Xte) if len(Xte) else np.empty(0)
    return Cell(in_cal, tau, ur, np.atleast_1d(out))


def aggregate_cell(agg: AggregateSpec, cells: Mapping[str, Cell], ytr,
                   pref: Preference) -> Cell:
    """Combine the method cells of one training set into an aggregate cell.

    The aggregate is thresholded like a single method: its own ``tau*`` is
    optimized on its in-sample output. The vote is a fixed rule, encoded as
    the share of signalling methods with threshold 0.5.
    """
    names = list(cells)
    cs = [cells[k] for k in names]
    if agg.kind == "best_of":
        i = best_index([c.ur_in for c in cs])
        c = cs[i]
        return Cell(c.in_probs, c.tau, c.ur_in, c.out_probs, names[i])
    if agg.kind == "vote":
        share_in = vote_share([c.in_probs > c.tau for c in cs])
        share_out = vote_share([c.out_probs > c.tau for c in cs])
        _, ur = usefulness(contingency(share_in > 0.5, ytr), pref)
        return Cell(share_in, 0.5, ur, share_out)
    if agg.kind == "mean":
        weights = None
    elif agg.weight_measure == "ur":
        weights = [c.ur_in for c in cs]
    else:
        weights = [c.in_auc(ytr) for c in cs]
    p_in = aggregate_probs([c.in_probs for c in cs], weights)
    p_out = aggregate_probs([c.out_probs for c in cs], weights)
    tau, ur = optimize_threshold(p_in, ytr, pref)
    return Cell(p_in, tau, ur, p_out)


def method_labels(methods: Sequence[MethodSpec]) -> list[str]:
    """Report labels, with ``#2``, ``#3``... appended to repeated ones."""
    seen: dict[str, int] = {}
    out = []
    for m in methods:
        k = seen.get(m.label, 0) + 1
        seen[m.label] = k
        out.append(m.label if k == 1 else f"{m.label}#{k}")
    return out


def as_aggregates(aggregates) -> list[AggregateSpec]:
    out = []
    for a in aggregates or ():
        out.append(a if isinstance(a, AggregateSpec) else AggregateSpec(str(a)))
    return out


def split_cells(methods: Sequence[MethodSpec], labels: Sequence[str], Xtr, ytr, Xte,
                pref: Preference, feature_names=None) -> tuple[dict[str, Cell], dict[str, str]]:
    """Method cells of one split, plus ``label -> message`` for fits that failed."""
    cells, failed = {}, {}
    for spec, lab in zip(methods, labels):
        try:
            cells[lab] = fit_cell(spec, Xtr, ytr, Xte, pref, feature_names)
        except FIT_ERRORS as exc:
            failed[lab] = f"{type(exc).__name__}: {exc}"
    return cells, failed


# -- results ---------------------------------------------------------------------------

@dataclass
class MethodOutcome:
    """Pooled out-of-sample output of one method or aggregate.

    Arrays are aligned on ``rows`` (indices into the race's observations);
    ``usable`` marks the rows that enter the evaluation.
    """

    name: str
    kind: str  # "method" or "aggregate"
    result: EvaluationResult
    rows: np.ndarray
    probs: np.ndarray
    taus: np.ndarray
    labels: np.ndarray
    usable: np.ndarray
    in_sample_ur: np.ndarray  # one value per fold or per quarter
    chosen: list | None = None

    @property
    def signals(self) -> np.ndarray:
        return (self.probs > self.taus).astype(np.int8)


@dataclass
class RaceResult:
    protocol: str
    outcomes: dict[str, MethodOutcome]
    seed: int
    folds: np.ndarray | None = None
    failures: dict[str, str] = field(default_factory=dict)
    countries: np.ndarray | None = None
    quarters: np.ndarray | None = None

    def __getitem__(self, name) -> MethodOutcome:
        return self.outcomes[name]

    @property
    def names(self) -> list[str]:
        return list(self.outcomes)

    def ranking(self) -> list[dict]:
        """One row per method/aggregate, by decreasing Ur (insertion order on ties)."""
        rows = [{"method": o.name, "kind": o.kind, **o.result.as_row()}
                for o in self.outcomes.values()]
        return sorted(rows, key=lambda r: -r["ur"] if not math.isnan(r["ur"]) else math.inf)


def _outcome(name, kind, rows, probs, taus, labels, usable, split_cells_, pref, p1=None,
             with_auc=True) -> MethodOutcome:
    """Pool the per-split predictions of one method and evaluate them once.

    The reported ``tau_star`` is the mean of the per-split thresholds.
    """
    ev = usable.astype(bool)
    lab = labels[ev]
    if lab.size == 0 or lab.all() or not lab.any():
        raise DegenerateClassError(
            f"{name}: the evaluated observations contain {int(lab.sum())} pre-crisis and "
            f"{int((lab == 0).sum())} tranquil rows; both classes are needed")
    counts = contingency(probs[ev] > taus[ev], lab)
    auc = roc_auc(probs[ev], labels[ev]) if with_auc else math.nan
    tau_mean = float(np.mean([c.tau for c in split_cells_]))
    res = evaluate_counts(counts, pref, auc=auc, tau_star=tau_mean, p1=p1)
    chosen = [c.chosen for c in split_cells_] if name == "best_of" else None
    return MethodOutcome(name, kind, res, rows, probs, taus, labels, usable,
                         np.array([c.ur_in for c in split_cells_], dtype=float), chosen)


# -- K-fold ----------------------------------------------------------------------------

def make_folds(y, K: int, seed: int) -> np.ndarray:
    """Stratified fold ids; every training complement must contain both classes.

    Reseeds (``seed + 1``, ``seed + 2``...) up to 100 times before giving up.
    """
    y = np.asarray(y).astype(bool)
    for attempt in range(FOLD_ATTEMPTS):
        folds = stratified_folds(y, K, seed + attempt)
        ok = True
        for k in range(K):
            tr = y[folds != k]
            if tr.all() or not tr.any():
                ok = False
                break
        if ok:
            return folds
    raise DegenerateClassError(
        f"could not form {K} folds with both classes in every training set "
        f"({int(y.sum())} positives, {int((~y).sum())} negatives)")


def _fold_job(k, methods, labels, X, y, folds, pref, feature_names):
    tr, te = folds != k, folds == k
    return split_cells(methods, labels, X[tr], y[tr], X[te], pref, feature_names)


def kfold_race(methods: Sequence[MethodSpec], X, y, pref: Preference = Preference(),
               K: int = 10, seed: int = 0, aggregates=AGGREGATE_KINDS,
               feature_names: Sequence[str] | None = None, workers: int | None = 1,
               folds: np.ndarray | None = None) -> RaceResult:
    """Cross-validated horse race on identical folds for every method.

    Per fold, each method is fitted on the other ``K - 1`` folds, its
    probabilities are ECDF-calibrated and ``tau*`` is optimized in-sample,
    then applied to the held-out fold. Contingency cells are summed across
    folds before Usefulness is computed. Aggregates are formed per fold from
    the methods' in-sample output.

    Parameters
    ----------
    methods : sequence of MethodSpec
    X : array of shape (N, G)
    y : array of shape (N,)
    pref : Preference
    K : int
        Number of folds (``K = N`` is leave-one-out).
    seed : int
        Fold seed; the assignment depends only on ``(y, K, seed)``.
    aggregates : iterable of str or AggregateSpec
    folds : array of int, optional
        Precomputed assignment, overriding ``K`` and ``seed``.

    Returns
    -------
    RaceResult
        Methods that failed on any fold are left out (see ``failures``).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int8)
    if K < 2:
        raise ValueError("K must be at least 2")
    if not methods:
        raise ValueError("no methods to race")
    if folds is None:
        folds = make_folds(y, K, seed)
    K = int(folds.max()) + 1
    labels = method_labels(methods)
    job = partial(_fold_job, methods=methods, labels=labels, X=X, y=y, folds=folds, pref=pref,
                  feature_names=feature_names)
    per_fold = map_ordered(job, range(K), workers)
    failures = {}
    for k, (_, failed) in enumerate(per_fold):
        for lab, msg in failed.items():
            failures.setdefault(lab, f"fold {k}: {msg}")
    for lab, msg in failures.items():
        warnings.warn(f"{lab} dropped from the race ({msg})", stacklevel=2)
    alive = [lab for lab in labels if lab not in failures]
    if not alive:
        raise InsufficientDataError(f"every method failed: {failures}")
    cells = [{lab: c[lab] for lab in alive} for c, _ in per_fold]
    aggs = as_aggregates(aggregates)
    for agg in aggs:
        for k in range(K):
            ytr = y[folds != k]
            cells[k][agg.label] = aggregate_cell(agg, {lab: cells[k][lab] for lab in alive},
                                                 ytr, pref)
    n = len(y)
    outcomes = {}
    kinds = {lab: "method" for lab in alive} | {a.label: "aggregate" for a in aggs}
    for name, kind in kinds.items():
        probs = np.empty(n)
        taus = np.empty(n)
        for k in range(K):
            te = folds == k
            probs[te] = cells[k][name].out_probs
            taus[te] = cells[k][name].tau
        outcomes[name] = _outcome(name, kind, np.arange(n), probs, taus, y,
                                  np.ones(n, dtype=bool), [cells[k][name] for k in range(K)],
                                  pref, with_auc=name != "vote")
    return RaceResult("kfold", outcomes, seed, folds, failures)


# -- grid search -----------------------------------------------------------------------

@dataclass
class GridSearchResult:
    best: MethodSpec
    table: list[dict]  # one row per grid point: params, ur, auc
    failures: list[dict]


def grid_points(grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product of the parameter lists, last key varying fastest."""
    keys = list(grid)
    if not keys:
        return [{}]
    for k in keys:
        if len(grid[k]) == 0:
            raise ValueError(f"grid for {k!r} is empty")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _grid_job(spec, X, y, pref, K, seed, folds, feature_names):
    try:
        r = kfold_race([spec], X, y, pref, K, seed, aggregates=(),
                       feature_names=feature_names, folds=folds)
    except FIT_ERRORS as exc:
        return None, f"{type(exc).__name__}: {exc}"
    if r.failures:
        return None, next(iter(r.failures.values()))
    res = next(iter(r.outcomes.values())).result
    return (res.ur, res.auc), None


def grid_search(family: str, grid: Mapping[str, Sequence], X, y,
                pref: Preference = Preference(), K: int = 10, seed: int = 0,
                base: MethodSpec | None = None, feature_names=None,
                workers: int | None = 1) -> GridSearchResult:
    """Exhaustive search for the parameters with the best cross-validated Ur.

    Every grid point is raced on the same folds. Ties go to the earliest
    point in grid order. Points whose fits fail are recorded; if all fail a
    ``InsufficientDataError`` lists them.
    """
    base_params = dict(base.params) if base is not None else {}
    mseed = base.seed if base is not None else 0
    name = base.name if base is not None else None
    specs = [MethodSpec(family, {**base_params, **pt}, mseed, name) for pt in grid_points(grid)]
    y = np.asarray(y).astype(np.int8)
    folds = make_folds(y, K, seed)
    job = partial(_grid_job, X=np.asarray(X, dtype=float), y=y, pref=pref, K=K, seed=seed,
                  folds=folds, feature_names=feature_names)
    results = map_ordered(job, specs, workers)
    table, failures = [], []
    best, best_ur = None, -math.inf
    for spec, (scores, err) in zip(specs, results):
        point = {k: spec.params[k] for k in grid}
        if err is not None:
            failures.append({"params": point, "error": err})
            continue
        ur, auc = scores
        table.append({"params": point, "ur": ur, "auc": auc})
        if ur > best_ur:
            best, best_ur = spec, ur
    if best is None:
        raise InsufficientDataError(f"{family}: every grid point failed: {failures}")
    return GridSearchResult(best, table, failures)


# -- recursive real-time race ----------------------------------------------------------

@dataclass(frozen=True)
class RecursiveConfig:
    """Settings of the expanding-window backtest.

    ``method_start`` maps a method label or family to a later first quarter
    (for instance QDA, which needs more training rows per class).
    """

    start: int = parse_quarter("2005Q2")
    end: int | None = None
    method_start: Mapping[str, int] = field(default_factory=dict)
    horizon: Horizon = Horizon()
    post_crisis_quarters: int = 8
    lags: bool = True

    def first_quarter(self, spec: MethodSpec, label: str) -> int:
        q = self.method_start.get(label, self.method_start.get(spec.family, self.start))
        return max(int(q), self.start)


def prepare_recursive(raw: RawPanel, events: Sequence[CrisisEvent], cfg: RecursiveConfig,
                      features: Sequence[str] | None = None) -> LabeledPanel:
    """Publication-lagged (if configured) and labeled panel for the backtest."""
    panel = apply_publication_lags(raw) if cfg.lags and not raw.lagged else raw
    return build_dataset(panel, events, cfg.horizon, cfg.post_crisis_quarters, features)


def training_mask(data: LabeledPanel, q: int) -> np.ndarray:
    """Rows available for estimation at quarter ``q``: estimable and strictly earlier."""
    return data.estimable & (data.quarters < q)


def recursive_quarters(data: LabeledPanel, cfg: RecursiveConfig) -> list[int]:
    qs = np.unique(data.quarters)
    last = cfg.end if cfg.end is not None else qs.max()
    return [int(q) for q in qs if cfg.start <= q <= last]


def quarter_cells(q, methods, labels, data: LabeledPanel, cfg: RecursiveConfig,
                  pref: Preference, aggregates, train_idx=None):
    """All cells for quarter ``q``.

    ``train_idx`` selects (possibly repeated) training rows; the default is
    every row of :func:`training_mask`. Returns ``(cells, failures,
    test_rows, train_p1)``.
    """
    if train_idx is None:
        train_idx = np.flatnonzero(training_mask(data, q))
    test = np.flatnonzero(data.complete & (data.quarters == q))
    active = [(s, lab) for s, lab in zip(methods, labels) if cfg.first_quarter(s, lab) <= q]
    if len(train_idx) == 0 or len(test) == 0 or not active:
        return {}, {}, test, math.nan
    Xtr, ytr = data.X[train_idx], data.y[train_idx]
    cells, failed = split_cells([s for s, _ in active], [lab for _, lab in active],
                                Xtr, ytr, data.X[test], pref, data.feature_names)
    if cells:
        method_cells = dict(cells)
        for agg in aggregates:
            cells[agg.label] = aggregate_cell(agg, method_cells, ytr, pref)
    return cells, failed, test, float(ytr.mean())


def _quarter_job(q, methods, labels, data, cfg, pref, aggregates):
    return quarter_cells(q, methods, labels, data, cfg, pref, aggregates)


def recursive_race(methods: Sequence[MethodSpec], raw: RawPanel,
                   events: Sequence[CrisisEvent], pref: Preference = Preference(),
                   cfg: RecursiveConfig = RecursiveConfig(), aggregates=AGGREGATE_KINDS,
                   features: Sequence[str] | None = None,
                   workers: int | None = 1) -> RaceResult:
    """Expanding-window real-time race.

    At each quarter ``q`` from ``cfg.start``, every method is refitted on the
    estimable rows dated before ``q`` (after publication lags), ``tau*(q)``
    is optimized in-sample and probabilities and signals are emitted for
    every country at ``q``. The pooled (signal, label) pairs of usable rows
    are evaluated once at the end; the crisis share used in Usefulness is the
    average in-sample share over the predictions.

    Quarters where a method cannot be fitted are skipped for it, with a
    warning.
    """
    data = prepare_recursive(raw, events, cfg, features)
    return recursive_race_data(methods, data, pref, cfg, aggregates, workers)


def recursive_race_data(methods, data: LabeledPanel, pref: Preference = Preference(),
                        cfg: RecursiveConfig = RecursiveConfig(), aggregates=AGGREGATE_KINDS,
                        workers: int | None = 1) -> RaceResult:
    """:func:`recursive_race` on an already prepared panel."""
    labels = method_labels(methods)
    aggs = as_aggregates(aggregates)
    quarters = recursive_quarters(data, cfg)
    job = partial(_quarter_job, methods=methods, labels=labels, data=data, cfg=cfg, pref=pref,
                  aggregates=aggs)
    per_q = map_ordered(job, quarters, workers)
    failures = {}
    for q, (_, failed, _, _) in zip(quarters, per_q):
        for lab, msg in failed.items():
            warnings.warn(f"{lab}: quarter {q} skipped ({msg})", stacklevel=2)
            failures.setdefault(lab, msg)
    names = labels + [a.label for a in aggs]
    kinds = {lab: "method" for lab in labels} | {a.label: "aggregate" for a in aggs}
    outcomes = {}
    for name in names:
        parts = [(cells[name], test, p1) for cells, _, test, p1 in per_q if name in cells]
        if not parts:
            continue
        rows = np.concatenate([t for _, t, _ in parts])
        probs = np.concatenate([c.out_probs for c, _, _ in parts])
        taus = np.concatenate([np.full(len(t), c.tau) for c, t, _ in parts])
        p1s = np.concatenate([np.full(len(t), p) for _, t, p in parts])
        usable = data.usable[rows]
        y = data.y[rows]
        p1 = float(np.mean(p1s[usable])) if usable.any() else None
        outcomes[name] = _outcome(name, kinds[name], rows, probs, taus, y, usable,
                                  [c for c, _, _ in parts], pref, p1=p1,
                                  with_auc=name != "vote")
    if not outcomes:
        raise InsufficientDataError("no quarter could be estimated")
    return RaceResult("recursive", outcomes, 0, None, failures, data.countries, data.quarters)
