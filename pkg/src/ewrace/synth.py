"""Synthetic crisis panels with a documented data-generating process.

Each country's indicators are independent stationary AR(1) series,
``x[t] = phi * x[t-1] + sqrt(1 - phi^2) * e[t]`` with ``e ~ N(0, 1)``, so every
indicator has unit variance. Crisis events are placed at random with enough
spacing that pre-crisis windows and post-crisis exclusions of one event never
overlap another. In the quarters ``lo..hi`` before an event start, each of
the first ``n_informative`` indicators is shifted by
``signal_strength * direction_j`` with directions ``+1, -1, +1, ...``. The
optimal classifier is therefore a linear rule, and ``signal_strength = 0``
makes labels independent of the features.
"""
from __future__ import annotations

import numpy as np

from .panel_data import (
    ACCOUNTING,
    MARKET,
    CrisisEvent,
    Horizon,
    RawPanel,
    format_quarter,
    parse_quarter,
)

PHI = 0.5
MIN_DURATION, MAX_DURATION = 4, 8


def _place_events(rng, n_quarters: int, k: int, gap: int, lead: int, attempts: int = 1000):
    """Start offsets and durations of ``k`` events within one country's sample."""
    need = lead + k * (MAX_DURATION + gap)
    if need > n_quarters:
        raise ValueError(f"cannot fit {k} events in {n_quarters} quarters "
                         f"(need at least {need} with the required spacing)")
    for _ in range(attempts):
        dur = rng.integers(MIN_DURATION, MAX_DURATION + 1, k)
        slack = n_quarters - lead - int(dur.sum()) - gap * k
        # random split of the slack into k + 1 non-negative gaps
        cuts = np.sort(rng.integers(0, slack + 1, k))
        extra = np.diff(np.r_[0, cuts])
        starts, t = [], lead
        for i in range(k):
            t += int(extra[i])
            starts.append(t)
            t += int(dur[i]) + gap
        if t <= n_quarters + gap:
            return starts, [int(d) for d in dur]
    raise ValueError("event placement failed")


def synth_panel(seed: int = 0, n_countries: int = 15, n_quarters: int = 100,
                n_events: int | None = None, signal_strength: float = 1.0,
                n_features: int = 6, n_informative: int = 3, start: str = "1990Q1",
                horizon: Horizon = Horizon(), post_crisis_quarters: int = 8
                ) -> tuple[RawPanel, list[CrisisEvent]]:
    """Generate a quarterly panel and its crisis events.

    Parameters
    ----------
    seed : int
        Fixes every random draw; equal arguments give identical panels.
    n_countries, n_quarters : int
        Panel shape; countries are named ``C01, C02, ...``.
    n_events : int, optional
        Total number of crises, dealt round-robin over countries. Defaults
        to one per country.
    signal_strength : float
        Mean shift, in standard deviations, of the informative indicators
        during pre-crisis windows.
    n_features, n_informative : int
        Indicator count and how many of them carry signal. Indicators
        alternate between accounting- and market-based kinds.
    horizon : Horizon
        Pre-crisis window that receives the shift.

    Returns
    -------
    (RawPanel, list of CrisisEvent)

    Raises
    ------
    ValueError
        If the events cannot be spaced without overlapping windows.
    """
    if n_events is None:
        n_events = n_countries
    if n_events < 1:
        raise ValueError("n_events must be at least 1")
    if not 0 <= n_informative <= n_features:
        raise ValueError("n_informative must lie in [0, n_features]")
    rng = np.random.default_rng(seed)
    q0 = parse_quarter(start)
    per_country = [n_events // n_countries + (i < n_events % n_countries)
                   for i in range(n_countries)]
    gap = post_crisis_quarters + horizon.hi + 1
    direction = np.where(np.arange(n_informative) % 2 == 0, 1.0, -1.0)
    countries, quarters, values, events = [], [], [], []
    for i in range(n_countries):
        code = f"C{i + 1:02d}"
        x = np.empty((n_quarters, n_features))
        innov = rng.standard_normal((n_quarters, n_features))
        x[0] = innov[0]
        for t in range(1, n_quarters):
            x[t] = PHI * x[t - 1] + np.sqrt(1 - PHI ** 2) * innov[t]
        if per_country[i]:
            starts, durs = _place_events(rng, n_quarters, per_country[i], gap, horizon.hi)
            for s, d in zip(starts, durs):
                events.append(CrisisEvent(code, q0 + s, q0 + s + d - 1))
                pre = np.arange(max(s - horizon.hi, 0), s - horizon.lo + 1)
                x[pre, :n_informative] += signal_strength * direction
        countries += [code] * n_quarters
        quarters.append(q0 + np.arange(n_quarters))
        values.append(x)
    X = np.vstack(values)
    names = [f"x{j + 1}" for j in range(n_features)]
    kinds = {n: (ACCOUNTING if j % 2 == 0 else MARKET) for j, n in enumerate(names)}
    raw = RawPanel.from_arrays(countries, np.concatenate(quarters),
                               {n: X[:, j] for j, n in enumerate(names)}, kinds)
    return raw, events


def describe(raw: RawPanel, events) -> str:
    span = f"{format_quarter(int(raw.frame.quarter.min()))}-{format_quarter(int(raw.frame.quarter.max()))}"
    return f"{len(raw.countries)} countries, {len(raw)} rows, {span}, {len(events)} events"
