"""Quarterly country panels: ingestion, indicator transformations, crisis labels.

Quarters are carried as integers ``year * 4 + q`` (q in 1..4) so that quarter
arithmetic is plain integer arithmetic.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import solveh_banded

ACCOUNTING = "accounting"
MARKET = "market"
PUBLICATION_LAGS = {ACCOUNTING: 2, MARKET: 1}

HP_LAMBDA = 400_000.0
HP_WARMUP = 3

_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*[Qq]([1-4])\s*$")
_MISSING = {"", "na", "nan", "null", "."}


class DataError(ValueError):
    """Malformed input data (bad CSV row, inconsistent panel, bad events)."""


# -- quarters -----------------------------------------------------------------

def quarter_index(year: int, q: int) -> int:
    if not 1 <= q <= 4:
        raise ValueError(f"quarter must be in 1..4, got {q}")
    return int(year) * 4 + int(q)


def parse_quarter(text: str | int) -> int:
    """Parse ``"2008Q1"`` into a quarter index; integers pass through."""
    if isinstance(text, (int, np.integer)):
        return int(text)
    m = _QUARTER_RE.match(str(text))
    if m is None:
        raise ValueError(f"not a quarter: {text!r} (expected YYYYQn)")
    return quarter_index(int(m.group(1)), int(m.group(2)))


def format_quarter(index: int) -> str:
    year, q = divmod(int(index) - 1, 4)
    return f"{year}Q{q + 1}"


# -- domain types ---------------------------------------------------------------

@dataclass(frozen=True)
class CrisisEvent:
    country: str
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise DataError(
                f"crisis event for {self.country} starts after it ends "
                f"({format_quarter(self.start)} > {format_quarter(self.end)})")


@dataclass(frozen=True)
class Horizon:
    """Pre-crisis window, in quarters before the crisis start."""

    lo: int = 5
    hi: int = 12

    def __post_init__(self):
        if self.lo < 1 or self.hi < self.lo:
            raise ValueError(f"invalid horizon {self.lo}..{self.hi}")


_TRANSFORM_KINDS = ("level", "ratio", "annual_growth", "abs_trend_dev", "rel_trend_dev")


@dataclass(frozen=True)
class TransformSpec:
    """One indicator transformation.

    ``source`` names the input column for every kind except ``ratio``, which
    divides ``numerator`` by ``denominator``.
    """

    kind: str
    source: str | None = None
    numerator: str | None = None
    denominator: str | None = None
    hp_lambda: float = HP_LAMBDA

    def __post_init__(self):
        if self.kind not in _TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}; "
                             f"expected one of {_TRANSFORM_KINDS}")
        if self.kind == "ratio":
            if not (self.numerator and self.denominator):
                raise ValueError("ratio transform needs numerator and denominator")
        elif not self.source:
            raise ValueError(f"{self.kind} transform needs a source column")
        if not self.hp_lambda > 0:
            raise ValueError("hp_lambda must be positive")

    @property
    def inputs(self) -> tuple[str, ...]:
        if self.kind == "ratio":
            return (self.numerator, self.denominator)
        return (self.source,)


@dataclass(frozen=True)
class PanelObservation:
    country: str
    quarter: int
    x: np.ndarray
    label: int
    usable: bool


class RawPanel:
    """Quarterly (country, quarter) panel of indicator values.

    Each country's rows cover a contiguous quarter range, so positional shifts
    within a country are quarter shifts. Missing values are NaN.
    """

    def __init__(self, frame: pd.DataFrame, kinds: dict[str, str] | None = None,
                 lagged: bool = False):
        if not {"country", "quarter"} <= set(frame.columns):
            raise DataError("panel needs 'country' and 'quarter' columns")
        indicators = [c for c in frame.columns if c not in ("country", "quarter")]
        kinds = dict(kinds or {})
        for name in indicators:
            kinds.setdefault(name, ACCOUNTING)
            if kinds[name] not in PUBLICATION_LAGS:
                raise DataError(f"indicator {name!r} has unknown kind {kinds[name]!r}")
        self.frame = _normalize(frame, indicators)
        self.kinds = {k: kinds[k] for k in indicators}
        self.lagged = lagged

    @classmethod
    def from_arrays(cls, countries, quarters, values: dict[str, Sequence[float]],
                    kinds: dict[str, str] | None = None) -> "RawPanel":
        frame = pd.DataFrame({"country": list(map(str, countries)),
                              "quarter": np.asarray(quarters, dtype=np.int64)})
        for name, col in values.items():
            frame[name] = np.asarray(col, dtype=float)
        return cls(frame, kinds)

    @property
    def indicators(self) -> list[str]:
        return [c for c in self.frame.columns if c not in ("country", "quarter")]

    @property
    def countries(self) -> list[str]:
        return list(dict.fromkeys(self.frame["country"]))

    def column(self, name: str) -> pd.Series:
        if name not in self.frame.columns:
            raise KeyError(f"indicator {name!r} not in panel")
        return self.frame[name]

    def series(self, country: str, name: str) -> pd.Series:
        rows = self.frame[self.frame["country"] == country]
        return pd.Series(rows[name].to_numpy(), index=rows["quarter"].to_numpy(), name=name)

    def with_columns(self, columns: dict[str, pd.Series | np.ndarray],
                     kinds: dict[str, str] | None = None,
                     keep: Iterable[str] | None = None) -> "RawPanel":
        """New panel with added/replaced columns; ``keep`` restricts indicators."""
        frame = self.frame.copy()
        for name, col in columns.items():
            frame[name] = np.asarray(col, dtype=float)
        all_kinds = {**self.kinds, **(kinds or {})}
        if keep is not None:
            keep = list(keep)
            frame = frame[["country", "quarter", *keep]]
        names = [c for c in frame.columns if c not in ("country", "quarter")]
        return RawPanel(frame, {k: all_kinds.get(k, ACCOUNTING) for k in names},
                        lagged=self.lagged)

    def truncate(self, before: int) -> "RawPanel":
        """Rows strictly before quarter ``before``."""
        frame = self.frame[self.frame["quarter"] < before]
        return RawPanel(frame.reset_index(drop=True), self.kinds, lagged=self.lagged)

    def __len__(self):
        return len(self.frame)

    def __repr__(self):
        return (f"RawPanel({len(self.countries)} countries, {len(self)} rows, "
                f"indicators={self.indicators}, lagged={self.lagged})")


def _normalize(frame: pd.DataFrame, indicators: list[str]) -> pd.DataFrame:
    frame = frame.copy()
    frame["country"] = frame["country"].astype(str)
    frame["quarter"] = frame["quarter"].astype(np.int64)
    # stable country order: first appearance
    order = {c: i for i, c in enumerate(dict.fromkeys(frame["country"]))}
    pieces = []
    for country in order:
        rows = frame[frame["country"] == country]
        q = rows["quarter"].to_numpy()
        if np.any(np.diff(q) == 0) or len(np.unique(q)) != len(q):
            raise DataError(f"duplicate quarter for country {country}")
        rows = rows.sort_values("quarter", kind="stable")
        full = np.arange(rows["quarter"].iloc[0], rows["quarter"].iloc[-1] + 1)
        rows = rows.set_index("quarter").reindex(full)
        rows["country"] = country
        rows.index.name = "quarter"
        pieces.append(rows.reset_index()[["country", "quarter", *indicators]])
    if not pieces:
        return pd.DataFrame(columns=["country", "quarter", *indicators])
    out = pd.concat(pieces, ignore_index=True)
    for name in indicators:
        out[name] = out[name].astype(float)
    return out


# -- HP filtering ----------------------------------------------------------------

def _hp_banded(n: int, lam: float) -> np.ndarray:
    # upper banded form of I + lam * D'D, D the second-difference operator
    diag = np.full(n, 6.0)
    diag[[0, -1]] = 1.0
    diag[[1, -2]] = 5.0
    off1 = np.full(n - 1, -4.0)
    off1[[0, -1]] = -2.0
    ab = np.zeros((3, n))
    ab[2] = 1.0 + lam * diag
    ab[1, 1:] = lam * off1
    ab[0, 2:] = lam
    return ab


def hp_trend(series, lam: float = 1600.0) -> np.ndarray:
    """Two-sided Hodrick-Prescott trend of a finite series (length >= 3)."""
    y = np.asarray(series, dtype=float)
    _check_finite(y)
    if len(y) < 3:
        raise ValueError("HP filter needs at least 3 points")
    return solveh_banded(_hp_banded(len(y), lam), y)


def hp_trend_one_sided(series, lam: float = HP_LAMBDA) -> np.ndarray:
    """One-sided (recursive) Hodrick-Prescott trend.

    ``trend[t]`` is the last point of the two-sided trend fitted to
    ``series[:t + 1]``, so no value after ``t`` is used. The first
    ``HP_WARMUP`` points have too little history and carry the raw value.

    Parameters
    ----------
    series : array-like
        Finite 1d series.
    lam : float
        Smoothing parameter; 400 000 is the default for financial cycles in
        quarterly data.

    Returns
    -------
    trend : ndarray, same length as ``series``
    """
    y = np.asarray(series, dtype=float)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    _check_finite(y)
    trend = y.copy()
    for t in range(HP_WARMUP, len(y)):
        n = t + 1
        trend[t] = solveh_banded(_hp_banded(n, lam), y[:n])[-1]
    return trend


def _check_finite(y: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise ValueError(f"non-finite value at position {bad[0]}")


def _finite_runs(values: np.ndarray):
    ok = np.isfinite(values)
    start = None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            yield start, i
            start = None


# -- transformations -------------------------------------------------------------

def transform(raw: RawPanel, spec: TransformSpec) -> pd.Series:
    """Compute one transformed indicator column aligned with ``raw.frame``.

    Undefined points (growth without four quarters of history, the HP
    warm-up, relative deviations from a zero trend) are NaN.
    """
    for name in spec.inputs:
        if name not in raw.frame.columns:
            raise KeyError(f"transform needs column {name!r}, not in panel")
    out = np.full(len(raw.frame), np.nan)
    for country, rows in raw.frame.groupby("country", sort=False):
        idx = rows.index.to_numpy()
        if spec.kind == "ratio":
            num = rows[spec.numerator].to_numpy()
            den = rows[spec.denominator].to_numpy()
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(den != 0, num / den, np.nan)
        else:
            x = rows[spec.source].to_numpy()
            if spec.kind == "level":
                val = x.copy()
            elif spec.kind == "annual_growth":
                val = np.full(len(x), np.nan)
                with np.errstate(divide="ignore", invalid="ignore"):
                    val[4:] = np.where(x[:-4] != 0, x[4:] / x[:-4] - 1.0, np.nan)
            else:
                val = _trend_deviation(x, spec.kind, spec.hp_lambda)
        val[~np.isfinite(val)] = np.nan
        out[idx] = val
    return pd.Series(out, index=raw.frame.index, name=spec.source or spec.numerator)


def _trend_deviation(x: np.ndarray, kind: str, lam: float) -> np.ndarray:
    val = np.full(len(x), np.nan)
    for a, b in _finite_runs(x):
        seg = x[a:b]
        trend = hp_trend_one_sided(seg, lam)
        dev = seg - trend
        if kind == "rel_trend_dev":
            with np.errstate(divide="ignore", invalid="ignore"):
                dev = np.where(trend != 0, dev / trend, np.nan)
        dev[:HP_WARMUP] = np.nan
        val[a:b] = dev
    return val


@dataclass(frozen=True)
class PipelineStep:
    """Output column, how to compute it, its publication-lag kind."""

    name: str
    spec: TransformSpec
    lag: str = ACCOUNTING
    keep: bool = True


def apply_pipeline(raw: RawPanel, steps: Sequence[PipelineStep]) -> RawPanel:
    """Run transformation steps in order; later steps may use earlier outputs.

    The result holds only the columns of steps with ``keep=True``, in step order.
    """
    panel = raw
    for step in steps:
        col = transform(panel, step.spec)
        panel = panel.with_columns({step.name: col}, kinds={step.name: step.lag})
    kept = [s.name for s in steps if s.keep]
    return panel.with_columns({}, keep=kept)


def apply_publication_lags(panel: RawPanel) -> RawPanel:
    """Shift accounting indicators by 2 quarters and market indicators by 1.

    A value observed for 2007Q1 becomes available in 2007Q3 (accounting) or
    2007Q2 (market). Raises if the panel is already lagged.
    """
    if panel.lagged:
        raise ValueError("publication lags already applied to this panel")
    frame = panel.frame.copy()
    grouped = frame.groupby("country", sort=False)
    for name, kind in panel.kinds.items():
        frame[name] = grouped[name].shift(PUBLICATION_LAGS[kind])
    return RawPanel(frame, panel.kinds, lagged=True)


# -- events and labels -------------------------------------------------------------

def merge_events(events: Iterable[CrisisEvent]) -> list[CrisisEvent]:
    """Merge overlapping or adjacent events per country; sorted by country, start."""
    by_country: dict[str, list[CrisisEvent]] = {}
    for ev in events:
        by_country.setdefault(ev.country, []).append(ev)
    merged = []
    for country in by_country:
        evs = sorted(by_country[country], key=lambda e: e.start)
        cur = evs[0]
        for ev in evs[1:]:
            if ev.start <= cur.end + 1:
                cur = CrisisEvent(country, cur.start, max(cur.end, ev.end))
            else:
                merged.append(cur)
                cur = ev
        merged.append(cur)
    return merged


def _label_arrays(quarters: np.ndarray, events: Sequence[CrisisEvent], horizon: Horizon,
                  post_crisis_quarters: int) -> tuple[np.ndarray, np.ndarray]:
    positive = np.zeros(len(quarters), dtype=bool)
    excluded = np.zeros(len(quarters), dtype=bool)
    for ev in events:
        d = ev.start - quarters
        positive |= (d >= horizon.lo) & (d <= horizon.hi)
        excluded |= (d >= 1) & (d <= horizon.lo - 1)
        excluded |= (quarters >= ev.start) & (quarters <= ev.end + post_crisis_quarters)
    usable = ~excluded
    return (positive & usable).astype(np.int8), usable


def label_and_filter(panel: RawPanel, events: Sequence[CrisisEvent],
                     horizon: Horizon = Horizon(), post_crisis_quarters: int = 8,
                     features: Sequence[str] | None = None) -> list[PanelObservation]:
    """Label every (country, quarter) row of ``panel``.

    Rows ``horizon.lo..horizon.hi`` quarters before an event start are
    pre-crisis (label 1). Rows inside an event, in the ``post_crisis_quarters``
    after it, or ``1..horizon.lo - 1`` quarters before its start are unusable;
    exclusion wins when windows of adjacent events overlap.
    """
    data = build_dataset(panel, events, horizon, post_crisis_quarters, features)
    return data.observations()


@dataclass
class LabeledPanel:
    """Array view of a labeled panel; one row per (country, quarter).

    ``usable`` marks rows that survive the crisis/post-crisis/near-crisis
    exclusions; ``complete`` marks rows without missing features.
    """

    countries: np.ndarray
    quarters: np.ndarray
    X: np.ndarray
    y: np.ndarray
    usable: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    @property
    def complete(self) -> np.ndarray:
        return np.all(np.isfinite(self.X), axis=1)

    @property
    def estimable(self) -> np.ndarray:
        """Rows used for estimation and evaluation: usable and complete."""
        return self.usable & self.complete

    def subset(self, mask) -> "LabeledPanel":
        mask = np.asarray(mask)
        return replace(self, countries=self.countries[mask], quarters=self.quarters[mask],
                       X=self.X[mask], y=self.y[mask], usable=self.usable[mask])

    def estimation_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.estimable
        return self.X[m], self.y[m].astype(np.int8)

    def observations(self) -> list[PanelObservation]:
        return [PanelObservation(str(c), int(q), x, int(lab), bool(u))
                for c, q, x, lab, u in zip(self.countries, self.quarters, self.X,
                                           self.y, self.usable)]

    def __len__(self):
        return len(self.quarters)


def build_dataset(panel: RawPanel, events: Sequence[CrisisEvent],
                  horizon: Horizon = Horizon(), post_crisis_quarters: int = 8,
                  features: Sequence[str] | None = None) -> LabeledPanel:
    """Labeled array view of ``panel`` (see :func:`label_and_filter`)."""
    features = list(features) if features is not None else panel.indicators
    frame = panel.frame
    events = merge_events(events)
    y = np.zeros(len(frame), dtype=np.int8)
    usable = np.ones(len(frame), dtype=bool)
    for country, rows in frame.groupby("country", sort=False):
        evs = [e for e in events if e.country == country]
        idx = rows.index.to_numpy()
        lab, ok = _label_arrays(rows["quarter"].to_numpy(), evs, horizon, post_crisis_quarters)
        y[idx] = lab
        usable[idx] = ok
    return LabeledPanel(
        countries=frame["country"].to_numpy(dtype=object),
        quarters=frame["quarter"].to_numpy(dtype=np.int64),
        X=frame[features].to_numpy(dtype=float),
        y=y,
        usable=usable,
        feature_names=features,
    )


# -- CSV ingestion ---------------------------------------------------------------------

def _parse_value(text: str, path, line: int, column: str) -> float:
    t = text.strip()
    if t.lower() in _MISSING:
        return math.nan
    try:
        return float(t)
    except ValueError:
        raise DataError(f"{path}:{line}: column {column!r}: not a number: {text!r}") from None


def read_panel_csv(path, kinds: dict[str, str] | None = None) -> RawPanel:
    """Read a panel CSV: ``country, quarter (YYYYQn), indicator...``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].lower() != "country" or header[1].lower() != "quarter":
            raise DataError(f"{path}:1: header must start with country,quarter")
        indicators = header[2:]
        countries, quarters, cols = [], [], {name: [] for name in indicators}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                q = parse_quarter(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
            countries.append(row[0].strip())
            quarters.append(q)
            for name, text in zip(indicators, row[2:]):
                cols[name].append(_parse_value(text, path, line, name))
    return RawPanel.from_arrays(countries, quarters, cols, kinds)


def write_panel_csv(panel: RawPanel, path) -> None:
    frame = panel.frame.copy()
    frame["quarter"] = [format_quarter(q) for q in frame["quarter"]]
    frame.to_csv(path, index=False, float_format="%.10g", na_rep="", lineterminator="\n")


def read_events_csv(path) -> list[CrisisEvent]:
    """Read crisis events: ``country, start, end`` with YYYYQn quarters."""
    path = Path(path)
    events = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["country", "start", "end"]:
            raise DataError(f"{path}:1: header must be country,start,end")
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise DataError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            try:
                events.append(CrisisEvent(row[0].strip(), parse_quarter(row[1]),
                                          parse_quarter(row[2])))
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
    return events


def write_events_csv(events: Sequence[CrisisEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "start", "end"])
        for ev in events:
            w.writerow([ev.country, format_quarter(ev.start), format_quarter(ev.end)])
