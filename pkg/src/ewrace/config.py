"""Run configuration: YAML in, validated :class:`RunConfig` out."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .classifiers import FAMILIES, MethodSpec
from .ensembles import AGGREGATE_KINDS, AggregateSpec
from .experiments import RecursiveConfig
from .panel_data import (
    PUBLICATION_LAGS,
    Horizon,
    PipelineStep,
    TransformSpec,
    format_quarter,
    parse_quarter,
)

BUNDLED_CONFIG = Path(__file__).parent / "data" / "synthetic.yaml"

_TOP_KEYS = {"data", "pipeline", "features", "horizon", "post_crisis_quarters", "mu", "folds",
             "replicates", "alpha", "seed", "recursive", "methods", "aggregates",
             "weight_measure", "output", "workers"}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class MethodEntry:
    spec: MethodSpec
    grid: dict[str, list] = field(default_factory=dict)


@dataclass
class RunConfig:
    """Everything a run needs, validated before any computation starts."""

    panel: Path
    events: Path
    kinds: dict[str, str]
    pipeline: list[PipelineStep]
    features: list[str] | None
    horizon: Horizon
    post_crisis_quarters: int
    mu: float
    folds: int
    replicates: int
    alpha: float
    seed: int
    recursive: RecursiveConfig
    methods: list[MethodEntry]
    aggregates: list[AggregateSpec]
    output: Path
    workers: int | None
    base_dir: Path
    source: dict[str, Any] = field(default_factory=dict)

    @property
    def specs(self) -> list[MethodSpec]:
        return [m.spec for m in self.methods]

    def to_dict(self) -> dict:
        """Normalized, fully explicit form (paths as given, quarters as ``YYYYQn``)."""
        return {
            "data": {"panel": self.source["data"]["panel"],
                     "events": self.source["data"]["events"],
                     "kinds": dict(sorted(self.kinds.items()))},
            "pipeline": [{"name": s.name, "kind": s.spec.kind, "source": s.spec.source,
                          "numerator": s.spec.numerator, "denominator": s.spec.denominator,
                          "hp_lambda": s.spec.hp_lambda, "lag": s.lag, "keep": s.keep}
                         for s in self.pipeline],
            "features": self.features,
            "horizon": {"lo": self.horizon.lo, "hi": self.horizon.hi},
            "post_crisis_quarters": self.post_crisis_quarters,
            "mu": self.mu,
            "folds": self.folds,
            "replicates": self.replicates,
            "alpha": self.alpha,
            "seed": self.seed,
            "recursive": {
                "start": format_quarter(self.recursive.start),
                "end": format_quarter(self.recursive.end) if self.recursive.end else None,
                "method_start": {k: format_quarter(v)
                                 for k, v in self.recursive.method_start.items()},
                "lags": self.recursive.lags,
            },
            "methods": [{**m.spec.to_dict(), **({"grid": m.grid} if m.grid else {})}
                        for m in self.methods],
            "aggregates": [a.kind for a in self.aggregates],
            "weight_measure": self.aggregates[0].weight_measure if self.aggregates else "ur",
        }

    def digest(self) -> str:
        """SHA-256 over the normalized config and the bytes of the input files.

        Output location and worker count do not change results and are left out.
        """
        h = hashlib.sha256()
        h.update(json.dumps(self.to_dict(), sort_keys=True, default=str).encode())
        for p in (self.panel, self.events):
            h.update(p.read_bytes())
        return h.hexdigest()


def _section(d: dict, key: str, kind=dict, default=None):
    v = d.get(key, default)
    if v is None:
        return default
    if not isinstance(v, kind):
        raise ConfigError(f"'{key}' must be a {kind.__name__}")
    return v


def _number(d, key, default, cast, check, what):
    v = d.get(key, default)
    try:
        v = cast(v)
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be {what}, got {d.get(key)!r}") from None
    if not check(v):
        raise ConfigError(f"'{key}' must be {what}, got {v!r}")
    return v


def _quarter(v, key):
    try:
        return parse_quarter(str(v))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_config(d: dict, base_dir: Path | str = ".") -> RunConfig:
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base_dir = Path(base_dir)
    data = _section(d, "data", default={})
    for key in ("panel", "events"):
        if not data.get(key):
            raise ConfigError(f"data.{key} is required")
    kinds = dict(_section(data, "kinds", default={}))
    for k, v in kinds.items():
        if v not in PUBLICATION_LAGS:
            raise ConfigError(f"data.kinds.{k}: kind must be one of {sorted(PUBLICATION_LAGS)}")

    steps = []
    for i, s in enumerate(_section(d, "pipeline", list, default=[])):
        if not isinstance(s, dict) or "name" not in s or "kind" not in s:
            raise ConfigError(f"pipeline[{i}] needs 'name' and 'kind'")
        try:
            spec = TransformSpec(s["kind"], source=s.get("source"), numerator=s.get("numerator"),
                                 denominator=s.get("denominator"),
                                 hp_lambda=float(s.get("hp_lambda", 400_000.0)))
            steps.append(PipelineStep(str(s["name"]), spec, s.get("lag", "accounting"),
                                      bool(s.get("keep", True))))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"pipeline[{i}]: {exc}") from None
        if steps[-1].lag not in PUBLICATION_LAGS:
            raise ConfigError(f"pipeline[{i}].lag must be one of {sorted(PUBLICATION_LAGS)}")

    features = d.get("features")
    if features is not None and (not isinstance(features, list) or not features):
        raise ConfigError("'features' must be a non-empty list")

    hz = _section(d, "horizon", default={})
    try:
        horizon = Horizon(int(hz.get("lo", 5)), int(hz.get("hi", 12)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"horizon: {exc}") from None

    post = _number(d, "post_crisis_quarters", 8, int, lambda v: v >= 0, "a non-negative integer")
    mu = _number(d, "mu", 0.8, float, lambda v: 0 <= v <= 1, "a number in [0, 1]")
    folds = _number(d, "folds", 10, int, lambda v: v >= 2, "an integer >= 2")
    reps = _number(d, "replicates", 500, int, lambda v: v >= 2, "an integer >= 2")
    alpha = _number(d, "alpha", 0.1, float, lambda v: 0 < v < 1, "a number in (0, 1)")
    seed = _number(d, "seed", 0, int, lambda v: v >= 0, "a non-negative integer")
    workers = d.get("workers")
    if workers is not None:
        workers = _number(d, "workers", 1, int, lambda v: v >= 1, "a positive integer")

    rc = _section(d, "recursive", default={})
    unknown = set(rc) - {"start", "end", "method_start", "lags"}
    if unknown:
        raise ConfigError(f"unknown recursive keys: {sorted(unknown)}")
    recursive = RecursiveConfig(
        start=_quarter(rc.get("start", "2005Q2"), "recursive.start"),
        end=_quarter(rc["end"], "recursive.end") if rc.get("end") else None,
        method_start={str(k): _quarter(v, f"recursive.method_start.{k}")
                      for k, v in (rc.get("method_start") or {}).items()},
        horizon=horizon, post_crisis_quarters=post, lags=bool(rc.get("lags", True)))

    methods = []
    raw_methods = d.get("methods")
    if raw_methods is None:
        raw_methods = [{"family": f} for f in FAMILIES]
    if not isinstance(raw_methods, list) or not raw_methods:
        raise ConfigError("'methods' must be a non-empty list")
    for i, m in enumerate(raw_methods):
        if isinstance(m, str):
            m = {"family": m}
        try:
            spec = MethodSpec.from_dict(m)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"methods[{i}]: {exc}") from None
        grid = m.get("grid") or {}
        if not isinstance(grid, dict) or any(not isinstance(v, list) or not v
                                             for v in grid.values()):
            raise ConfigError(f"methods[{i}].grid must map parameter names to non-empty lists")
        for name, values in grid.items():
            for v in values:
                try:
                    spec.with_params(**{name: v})
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"methods[{i}].grid.{name}: {exc}") from None
        methods.append(MethodEntry(spec, {k: list(v) for k, v in grid.items()}))

    measure = d.get("weight_measure", "ur")
    aggs = d.get("aggregates", list(AGGREGATE_KINDS))
    if not isinstance(aggs, list):
        raise ConfigError("'aggregates' must be a list")
    try:
        aggregates = [AggregateSpec(str(a), measure) for a in aggs]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    source = {"data": {"panel": str(data["panel"]), "events": str(data["events"])}}
    return RunConfig(
        panel=(base_dir / str(data["panel"])).resolve(),
        events=(base_dir / str(data["events"])).resolve(),
        kinds=kinds, pipeline=steps, features=features, horizon=horizon,
        post_crisis_quarters=post, mu=mu, folds=folds, replicates=reps, alpha=alpha, seed=seed,
        recursive=recursive, methods=methods, aggregates=aggregates,
        output=Path(d.get("output", "ewrace-out")), workers=workers, base_dir=base_dir,
        source=source)


def load_config(path: Path | str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config (the bundled synthetic one by default) and apply overrides."""
    path = Path(path) if path is not None else BUNDLED_CONFIG
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        d = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return parse_config(d, path.parent)
