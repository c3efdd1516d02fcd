"""Deterministic CSV tables, plain-text rendering and SVG band plots."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .panel_data import format_quarter
from .uncertainty import OutputBand, SignificanceMatrix


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def write_rows(path: Path | str, rows: Sequence[dict], columns: Sequence[str] | None = None):
    """CSV with one line per dict; floats in shortest round-trip form, NaN as empty."""
    columns = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def write_matrix(path: Path | str, matrix: SignificanceMatrix):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(matrix.rows())


def read_rows(path: Path | str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def format_table(rows: Sequence[dict], columns: Sequence[str] | None = None,
                 digits: int = 3) -> str:
    """Fixed-width text rendering; numeric strings are rounded to ``digits``."""
    if not rows:
        return "(empty)\n"
    columns = list(columns) if columns is not None else list(rows[0])

    def show(v):
        if isinstance(v, str):
            try:
                f = float(v)
            except ValueError:
                return v
            if v.strip().lstrip("-").isdigit():
                return v
            v = f
        if isinstance(v, float):
            return "" if math.isnan(v) else f"{v:.{digits}f}"
        return _cell(v)

    body = [[show(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


BAND_COLUMNS = ("quarter", "p_mean", "p_lo", "p_hi", "tau_mean", "tau_lo", "tau_hi", "flag",
                "label", "usable")


def band_rows(band: OutputBand) -> list[dict]:
    order = np.argsort(band.quarters, kind="stable")
    return [{"quarter": format_quarter(int(band.quarters[i])), "p_mean": band.p_mean[i],
             "p_lo": band.p_lo[i], "p_hi": band.p_hi[i], "tau_mean": band.tau_mean[i],
             "tau_lo": band.tau_lo[i], "tau_hi": band.tau_hi[i], "flag": int(band.flag[i]),
             "label": int(band.labels[i]), "usable": bool(band.usable[i])} for i in order]


def write_bands(directory: Path | str, band: OutputBand) -> list[Path]:
    """One CSV and one SVG per country of ``band``; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for code in sorted(set(band.countries.tolist())):
        b = band.for_country(code)
        csv_path = directory / f"{code}.csv"
        write_rows(csv_path, band_rows(b), BAND_COLUMNS)
        svg_path = directory / f"{code}.svg"
        svg_path.write_text(band_svg(b, f"{band.method}: {code}"))
        written += [csv_path, svg_path]
    return written


def _path(xs: Iterable[float], ys: Iterable[float]) -> str:
    return " ".join(f"{'M' if i == 0 else 'L'}{x:.2f},{y:.2f}"
                    for i, (x, y) in enumerate(zip(xs, ys)))


def band_svg(band: OutputBand, title: str = "", width: int = 720, height: int = 320) -> str:
    """Probability and threshold lines with their interval tubes over time.

    Observations whose probability does not differ significantly from the
    threshold are marked with open circles.
    """
    order = np.argsort(band.quarters, kind="stable")
    q = band.quarters[order]
    ml, mr, mt, mb = 48, 16, 28, 36
    pw, ph = width - ml - mr, height - mt - mb
    span = max(int(q[-1] - q[0]), 1) if len(q) else 1

    def X(v):
        return ml + (v - q[0]) / span * pw

    def Y(v):
        return mt + (1.0 - float(np.clip(v, 0, 1))) * ph

    xs = [X(v) for v in q]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<text x="{ml}" y="16" font-size="13">{escape(title)}</text>']
    # pre-crisis quarters shaded
    for i, lab in zip(order, band.labels[order]):
        if lab:
            x = X(band.quarters[i])
            parts.append(f'<rect x="{x - pw / span / 2:.2f}" y="{mt}" width="{pw / span:.2f}" '
                         f'height="{ph}" fill="#eeeeee"/>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = Y(tick)
        parts.append(f'<line x1="{ml}" y1="{y:.2f}" x2="{ml + pw}" y2="{y:.2f}" '
                     f'stroke="#dddddd"/>')
        parts.append(f'<text x="{ml - 6}" y="{y + 4:.2f}" text-anchor="end">{tick:g}</text>')
    years = sorted({int(v) // 4 for v in q})
    step = max(1, len(years) // 8)
    for yr in years[::step]:
        x = X(yr * 4)
        if ml <= x <= ml + pw:
            parts.append(f'<text x="{x:.2f}" y="{height - 12}" text-anchor="middle">{yr}</text>')
    for lo, hi, mean, colour in (("tau_lo", "tau_hi", "tau_mean", "#d62728"),
                                 ("p_lo", "p_hi", "p_mean", "#1f77b4")):
        lo_v = getattr(band, lo)[order]
        hi_v = getattr(band, hi)[order]
        tube = _path(xs, [Y(v) for v in hi_v]) + " " + \
            _path(xs[::-1], [Y(v) for v in lo_v[::-1]]).replace("M", "L", 1) + " Z"
        parts.append(f'<path d="{tube}" fill="{colour}" fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<path d="{_path(xs, [Y(v) for v in getattr(band, mean)[order]])}" '
                     f'fill="none" stroke="{colour}" stroke-width="1.5"/>')
    for x, i in zip(xs, order):
        if band.flag[i] == 0:
            parts.append(f'<circle cx="{x:.2f}" cy="{Y(band.p_mean[i]):.2f}" r="3" '
                         f'fill="none" stroke="black"/>')
    parts.append(f'<text x="{ml + pw - 4}" y="{mt - 8}" text-anchor="end">'
                 f'<tspan fill="#1f77b4">probability</tspan>  '
                 f'<tspan fill="#d62728">threshold</tspan>  o not significant</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
