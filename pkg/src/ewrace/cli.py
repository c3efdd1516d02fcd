"""Command-line driver: ``ewrace <command> [options]``.

Every run writes its artifacts to ``<out>/<command>-<hash>/``, where the hash
covers the resolved configuration and the input data, together with the
resolved ``config.yaml`` and a ``manifest.json`` listing artifact digests.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Errors are reported as one JSON record on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .classifiers import InsufficientDataError, signal_extraction_rank
from .config import ConfigError, RunConfig, load_config
from .evaluation import DegenerateClassError, Preference
from .experiments import grid_search, kfold_race, prepare_recursive, recursive_race_data
from .panel_data import (
    DataError,
    LabeledPanel,
    RawPanel,
    apply_pipeline,
    build_dataset,
    format_quarter,
    read_events_csv,
    read_panel_csv,
    write_events_csv,
    write_panel_csv,
)
from .reporting import format_table, read_rows, write_bands, write_matrix, write_rows
from .synth import synth_panel
from .uncertainty import (
    NoSignificantObservations,
    RobustResult,
    bootstrap_recursive_data,
    repeated_cv_performance,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = ("ingest", "gridsearch", "race-cv", "race-recursive", "robust-cv",
            "robust-recursive", "bands", "report", "synth")

RACE_COLUMNS = ("method", "kind", "ur", "ua", "auc", "tau", "t1", "t2", "loss",
                "tp", "fp", "fn", "tn")
ROBUST_COLUMNS = ("method", "kind", "ur_mean", "ur_se", "ur_ci_lo", "ur_ci_hi", "ur_t_star",
                  "auc_mean", "auc_se", "auc_ci_lo", "auc_ci_hi", "auc_t_star",
                  "first_lower_significant")


# -- data ---------------------------------------------------------------------------------

def load_inputs(cfg: RunConfig) -> tuple[RawPanel, list]:
    """Panel after the transform pipeline, and crisis events."""
    for p in (cfg.panel, cfg.events):
        if not p.is_file():
            raise DataError(f"input file not found: {p}")
    raw = read_panel_csv(cfg.panel, cfg.kinds)
    events = read_events_csv(cfg.events)
    if cfg.pipeline:
        missing = {c for s in cfg.pipeline for c in s.spec.inputs} - set(raw.indicators) - \
            {s.name for s in cfg.pipeline}
        if missing:
            raise ConfigError(f"pipeline uses columns not in the panel: {sorted(missing)}")
        raw = apply_pipeline(raw, cfg.pipeline)
    if cfg.features:
        missing = set(cfg.features) - set(raw.indicators)
        if missing:
            raise ConfigError(f"features not in the panel: {sorted(missing)}")
    return raw, events


def features_of(cfg: RunConfig, raw: RawPanel) -> list[str]:
    return list(cfg.features) if cfg.features else raw.indicators


def cv_dataset(cfg: RunConfig, raw: RawPanel, events) -> LabeledPanel:
    data = build_dataset(raw, events, cfg.horizon, cfg.post_crisis_quarters,
                         features_of(cfg, raw))
    est = data.subset(data.estimable)
    if len(est) == 0:
        raise DataError("no estimable observations (all excluded or incomplete)")
    return est


# -- artifacts ----------------------------------------------------------------------------

class RunDir:
    """Output directory of one command; records written files for the manifest."""

    def __init__(self, cfg: RunConfig, command: str):
        self.digest = cfg.digest()
        self.path = Path(cfg.output) / f"{command}-{self.digest[:12]}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.files: list[Path] = []
        self.write_text("config.yaml", yaml.safe_dump(cfg.to_dict(), sort_keys=False))

    def file(self, name: str) -> Path:
        p = self.path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def write_text(self, name: str, text: str):
        self.file(name).write_text(text, encoding="utf-8")

    def rows(self, name: str, rows, columns=None):
        write_rows(self.file(name), rows, columns)

    def finish(self, extra: dict | None = None) -> Path:
        manifest = {
            "command": self.command,
            "config_hash": self.digest,
            "seed": self.cfg.seed,
            "alpha": self.cfg.alpha,
            "mu": self.cfg.mu,
            "folds": self.cfg.folds,
            "replicates": self.cfg.replicates,
            "version": __version__,
            **(extra or {}),
            "artifacts": {str(p.relative_to(self.path)): hashlib.sha256(p.read_bytes()).hexdigest()
                          for p in sorted(set(self.files))},
        }
        (self.path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return self.path


def _header(cfg: RunConfig, what: str) -> str:
    return (f"# {what}  mu={cfg.mu}  alpha={cfg.alpha}  folds={cfg.folds}  "
            f"replicates={cfg.replicates}  seed={cfg.seed}\n")


def _prediction_rows(result, countries, quarters) -> list[dict]:
    names = result.names
    n = len(countries)
    cols = {}
    for name in names:
        o = result[name]
        p = np.full(n, np.nan)
        t = np.full(n, np.nan)
        p[o.rows] = o.probs
        t[o.rows] = o.taus
        cols[name] = (p, t)
    labels = np.full(n, -1)
    usable = np.zeros(n, dtype=bool)
    for o in result.outcomes.values():
        labels[o.rows] = o.labels
        usable[o.rows] = o.usable
    rows = []
    for i in range(n):
        r = {"country": countries[i], "quarter": format_quarter(int(quarters[i])),
             "label": int(labels[i]), "usable": bool(usable[i])}
        if result.folds is not None:
            r["fold"] = int(result.folds[i])
        for name in names:
            r[f"{name}_p"] = cols[name][0][i]
            r[f"{name}_tau"] = cols[name][1][i]
        rows.append(r)
    return rows


def _keep_predicted(rows):
    return [r for r in rows if r["label"] >= 0]


# -- commands -----------------------------------------------------------------------------

def cmd_ingest(cfg: RunConfig, args) -> Path:
    raw, events = load_inputs(cfg)
    feats = features_of(cfg, raw)
    data = build_dataset(raw, events, cfg.horizon, cfg.post_crisis_quarters, feats)
    out = RunDir(cfg, "ingest")
    rows = [{"country": c, "quarter": format_quarter(int(q)),
             **{f: x[j] for j, f in enumerate(feats)}, "label": int(lab), "usable": bool(u),
             "complete": bool(ok)}
            for c, q, x, lab, u, ok in zip(data.countries, data.quarters, data.X, data.y,
                                            data.usable, data.complete)]
    out.rows("dataset.csv", rows, ["country", "quarter", *feats, "label", "usable", "complete"])
    est = data.estimable
    summary = {"rows": len(data), "usable": int(data.usable.sum()), "estimable": int(est.sum()),
               "pre_crisis": int(data.y[est].sum()), "events": len(events),
               "countries": len(raw.countries), "features": feats}
    out.write_text("summary.json", json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return out.finish()


def cmd_gridsearch(cfg: RunConfig, args) -> Path:
    raw, events = load_inputs(cfg)
    data = cv_dataset(cfg, raw, events)
    searched = [m for m in cfg.methods if m.grid]
    if not searched:
        raise ConfigError("no method in the config has a 'grid'")
    out = RunDir(cfg, "gridsearch")
    pref = Preference(cfg.mu)
    selected = []
    best_rows = []
    for m in cfg.methods:
        if not m.grid:
            selected.append(m.spec.to_dict())
            continue
        res = grid_search(m.spec.family, m.grid, data.X, data.y, pref, cfg.folds, cfg.seed,
                          base=m.spec, feature_names=data.feature_names, workers=cfg.workers)
        keys = list(m.grid)
        out.rows(f"grid_{m.spec.label}.csv",
                 [{**r["params"], "ur": r["ur"], "auc": r["auc"]} for r in res.table] +
                 [{**f["params"], "error": f["error"]} for f in res.failures],
                 [*keys, "ur", "auc", "error"])
        selected.append(res.best.to_dict())
        best = max(res.table, key=lambda r: r["ur"])
        best_rows.append({"method": m.spec.label,
                          **{"params": json.dumps(res.best.params, sort_keys=True)},
                          "ur": best["ur"], "auc": best["auc"], "points": len(res.table),
                          "failed": len(res.failures)})
    out.write_text("selected_methods.yaml", yaml.safe_dump({"methods": selected},
                                                          sort_keys=False))
    out.rows("best.csv", best_rows, ["method", "params", "ur", "auc", "points", "failed"])
    print(_header(cfg, "grid search") + format_table(best_rows))
    return out.finish()


def cmd_race_cv(cfg: RunConfig, args) -> Path:
    raw, events = load_inputs(cfg)
    data = cv_dataset(cfg, raw, events)
    pref = Preference(cfg.mu)
    res = kfold_race(cfg.specs, data.X, data.y, pref, cfg.folds, cfg.seed, cfg.aggregates,
                     data.feature_names, cfg.workers)
    out = RunDir(cfg, "race-cv")
    ranking = res.ranking()
    out.rows("ranking.csv", ranking, RACE_COLUMNS)
    out.rows("predictions.csv", _prediction_rows(res, data.countries, data.quarters))
    ind = signal_extraction_rank(data.X, data.y, pref, data.feature_names)
    out.rows("indicators.csv", [{"indicator": r.indicator, "direction": r.direction,
                                 "tau": r.tau, "ur": r.ur} for r in ind])
    if res.failures:
        out.rows("failures.csv", [{"method": k, "error": v} for k, v in res.failures.items()])
    print(_header(cfg, "cross-validated horse race") + format_table(ranking, RACE_COLUMNS))
    return out.finish({"n_observations": len(data)})


def cmd_race_recursive(cfg: RunConfig, args) -> Path:
    raw, events = load_inputs(cfg)
    data = prepare_recursive(raw, events, cfg.recursive, features_of(cfg, raw))
    pref = Preference(cfg.mu)
    res = recursive_race_data(cfg.specs, data, pref, cfg.recursive, cfg.aggregates, cfg.workers)
    out = RunDir(cfg, "race-recursive")
    ranking = res.ranking()
    out.rows("ranking.csv", ranking, RACE_COLUMNS)
    out.rows("predictions.csv", _keep_predicted(_prediction_rows(res, data.countries,
                                                                 data.quarters)))
    if res.failures:
        out.rows("failures.csv", [{"method": k, "error": v} for k, v in res.failures.items()])
    print(_header(cfg, "recursive real-time horse race") + format_table(ranking, RACE_COLUMNS))
    return out.finish()


def _write_robust(out: RunDir, cfg: RunConfig, res: RobustResult, title: str):
    for measure in ("ur", "auc"):
        out.rows(f"ranking_{measure}.csv", res.ranking(measure), ROBUST_COLUMNS)
        write_matrix(out.file(f"significance_{measure}.csv"), res.matrices[measure])
    out.rows("replicates.csv",
             [{"replicate": s, **{f"{n}_ur": res.ur[s, m] for m, n in enumerate(res.names)},
               **{f"{n}_auc": res.auc[s, m] for m, n in enumerate(res.names)}}
              for s in range(res.S)])
    print(_header(cfg, title) + format_table(res.ranking("ur"), ROBUST_COLUMNS))


def cmd_robust_cv(cfg: RunConfig, args) -> Path:
    raw, events = load_inputs(cfg)
    data = cv_dataset(cfg, raw, events)
    pref = Preference(cfg.mu)
    res = repeated_cv_performance(cfg.specs, data.X, data.y, pref, cfg.folds, cfg.replicates,
                                  cfg.seed, cfg.alpha, cfg.aggregates, data.feature_names,
                                  cfg.workers, keep_outputs=args.bands,
                                  countries=data.countries, quarters=data.quarters)
    out = RunDir(cfg, "robust-cv")
    _write_robust(out, cfg, res, "robust cross-validated horse race")
    if args.bands:
        out.rows("significant_only.csv", res.significant_only(pref))
        for name, band in res.bands.items():
            out.files += write_bands(out.path / "bands" / name, band)
    return out.finish()


def _robust_recursive(cfg: RunConfig) -> RobustResult:
    raw, events = load_inputs(cfg)
    data = prepare_recursive(raw, events, cfg.recursive, features_of(cfg, raw))
    return bootstrap_recursive_data(cfg.specs, data, Preference(cfg.mu), cfg.recursive,
                                    cfg.replicates, cfg.seed, cfg.alpha, cfg.aggregates,
                                    cfg.workers)


def cmd_robust_recursive(cfg: RunConfig, args) -> Path:
    res = _robust_recursive(cfg)
    out = RunDir(cfg, "robust-recursive")
    _write_robust(out, cfg, res, "robust recursive horse race")
    pref = Preference(cfg.mu)
    out.rows("averaged.csv", sorted(
        [{"method": n, **r.as_row()} for n, r in res.point.items()],
        key=lambda r: -r["ur"]), ["method", *RACE_COLUMNS[2:]])
    sig = res.significant_only(pref)
    out.rows("significant_only.csv", sig)
    print(format_table(sig))
    return out.finish()


def cmd_bands(cfg: RunConfig, args) -> Path:
    res = _robust_recursive(cfg)
    wanted = args.method or list(res.bands)
    unknown = set(wanted) - set(res.bands)
    if unknown:
        raise ConfigError(f"no bands for {sorted(unknown)}; available: {list(res.bands)}")
    out = RunDir(cfg, "bands")
    for name in wanted:
        out.files += write_bands(out.path / name, res.bands[name])
    summary = [{"method": n, "observations": len(res.bands[n]),
                "significant": int((res.bands[n].flag != 0).sum())} for n in wanted]
    out.rows("summary.csv", summary)
    print(_header(cfg, "output bands") + format_table(summary))
    return out.finish()


def cmd_report(args) -> int:
    roots = [Path(p) for p in (args.runs or [args.out or "ewrace-out"])]
    runs = []
    for root in roots:
        if (root / "manifest.json").is_file():
            runs.append(root)
        elif root.is_dir():
            runs += sorted(p.parent for p in root.glob("*/manifest.json"))
    if not runs:
        raise DataError(f"no run directories found under {[str(r) for r in roots]}")
    for run in runs:
        manifest = json.loads((run / "manifest.json").read_text())
        text = [f"== {manifest['command']}  {run}\n",
                f"config {manifest['config_hash'][:12]}  seed={manifest['seed']}  "
                f"alpha={manifest['alpha']}  mu={manifest['mu']}\n"]
        for name in sorted(manifest["artifacts"]):
            if not name.endswith(".csv") or "/" in name or name in ("predictions.csv",
                                                                     "dataset.csv",
                                                                     "replicates.csv"):
                continue
            text.append(f"\n-- {name}\n")
            if name.startswith("significance_"):
                text.append((run / name).read_text(encoding="utf-8"))
            else:
                text.append(format_table(read_rows(run / name)))
        body = "".join(text)
        (run / "report.txt").write_text(body, encoding="utf-8")
        print(body)
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out or "synthetic")
    out.mkdir(parents=True, exist_ok=True)
    try:
        raw, events = synth_panel(args.seed or 0, args.countries, args.quarters, args.events,
                                  args.strength, args.features)
    except ValueError as exc:
        raise ConfigError(f"synth: {exc}") from None
    write_panel_csv(raw, out / "panel.csv")
    write_events_csv(events, out / "events.csv")
    cfg = {"data": {"panel": "panel.csv", "events": "events.csv", "kinds": raw.kinds},
           "recursive": {"start": format_quarter(int(raw.frame.quarter.min()) + 40),
                         "method_start": {"qda": format_quarter(int(raw.frame.quarter.min())
                                                                + 44)}},
           "seed": args.seed or 0}
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
    print(f"wrote {out}/panel.csv, events.csv, config.yaml ({len(raw)} rows, "
          f"{len(events)} events)")
    return EXIT_OK


HANDLERS = {"ingest": cmd_ingest, "gridsearch": cmd_gridsearch, "race-cv": cmd_race_cv,
            "race-recursive": cmd_race_recursive, "robust-cv": cmd_robust_cv,
            "robust-recursive": cmd_robust_recursive, "bands": cmd_bands}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ewrace", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config (default: bundled synthetic panel)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int,
                        help="worker processes (default: $EWRACE_WORKERS or 1)")
    common.add_argument("--out", help="output root directory")
    common.add_argument("--alpha", type=float)
    common.add_argument("--mu", type=float)
    common.add_argument("--folds", type=int)
    common.add_argument("--replicates", type=int)
    helps = {"ingest": "label and filter the panel, write the estimation dataset",
             "gridsearch": "cross-validated grid search for methods with a grid",
             "race-cv": "K-fold horse race", "race-recursive": "recursive real-time horse race",
             "robust-cv": "repeated K-fold race with SEs and significance matrices",
             "robust-recursive": "bootstrapped recursive race with significance matrices",
             "bands": "per-country probability/threshold bands (CSV and SVG)"}
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        if name == "robust-cv":
            sp.add_argument("--bands", action="store_true",
                            help="also write per-observation output bands")
        if name == "bands":
            sp.add_argument("--method", action="append",
                            help="method to plot (repeatable; default all)")
    rp = sub.add_parser("report", help="render tables of finished runs as text")
    rp.add_argument("runs", nargs="*", help="run directories or output roots")
    rp.add_argument("--out")
    sp = sub.add_parser("synth", help="write a synthetic panel, events and config")
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--countries", type=int, default=15)
    sp.add_argument("--quarters", type=int, default=100)
    sp.add_argument("--events", type=int)
    sp.add_argument("--strength", type=float, default=1.125)
    sp.add_argument("--features", type=int, default=6)
    return p


def _error(code: int, exc: BaseException) -> int:
    record = {"status": "error", "exit_code": code, "error": type(exc).__name__,
              "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    return code


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        if args.command == "synth":
            return cmd_synth(args)
        overrides = {k: getattr(args, k) for k in ("seed", "alpha", "mu", "folds", "replicates",
                                                   "workers")}
        overrides["output"] = args.out
        cfg = load_config(args.config, overrides)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            path = HANDLERS[args.command](cfg, args)
        print(f"artifacts: {path}")
        return EXIT_OK
    except ConfigError as exc:
        return _error(EXIT_CONFIG, exc)
    except (DataError, FileNotFoundError) as exc:
        return _error(EXIT_DATA, exc)
    except (DegenerateClassError, InsufficientDataError, NoSignificantObservations,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        return _error(EXIT_NUMERIC, exc)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
