"""Method descriptors, the common fit/predict contract and ECDF calibration."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

FAMILIES = (
    "signal_extraction", "lda", "qda", "logit", "logit_lasso", "naive_bayes",
    "knn", "tree", "random_forest", "ann", "elm", "svm",
)

# family -> default parameters; benchmark values where one was selected
DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "signal_extraction": {"indicator": None, "mu": 0.8},
    "lda": {},
    "qda": {},
    "logit": {"max_iter": 100, "tol": 1e-8},
    "logit_lasso": {"lam": 0.0012, "tol": 1e-7, "max_iter": 1000},
    "naive_bayes": {"var_floor": 1e-9},
    "knn": {"k": 2, "distance": 1.0},
    "tree": {"min_leaf": 5, "cv_folds": 10, "prune": True},
    "random_forest": {"n_trees": 180, "mtry": 5, "min_leaf": 1},
    "ann": {"hidden": 8, "max_iter": 200, "decay": 0.005},
    "elm": {"hidden": 300, "activation": "tansig", "ridge": 1e-8},
    "svm": {"gamma": 0.4, "cost": 1.0, "kernel": "rbf", "tol": 1e-3, "platt_folds": 3},
}


class InsufficientDataError(ValueError):
    """Training data too small or single-class for the requested method."""


class ConvergenceWarning(UserWarning):
    pass


class RegularizationWarning(UserWarning):
    """A near-singular covariance was regularized."""


def _check_params(family: str, params: dict) -> dict:
    merged = {**DEFAULT_PARAMS[family], **params}
    unknown = set(params) - set(DEFAULT_PARAMS[family])
    if unknown:
        raise ValueError(f"unknown parameter(s) for {family}: {sorted(unknown)}")
    p = merged
    positive_ints = {
        "knn": ["k"], "random_forest": ["n_trees", "mtry", "min_leaf"],
        "ann": ["hidden", "max_iter"], "elm": ["hidden"], "tree": ["min_leaf", "cv_folds"],
        "logit": ["max_iter"], "logit_lasso": ["max_iter"], "svm": ["platt_folds"],
    }
    for name in positive_ints.get(family, []):
        if int(p[name]) != p[name] or p[name] < 1:
            raise ValueError(f"{family}.{name} must be a positive integer, got {p[name]!r}")
        p[name] = int(p[name])
    if family == "knn" and not p["distance"] > 0:
        raise ValueError("knn.distance (Minkowski order) must be positive")
    if family == "logit_lasso" and p["lam"] < 0:
        raise ValueError("logit_lasso.lam must be non-negative")
    if family == "ann" and p["decay"] < 0:
        raise ValueError("ann.decay must be non-negative")
    if family == "elm" and p["activation"] not in ("tansig", "sigmoid"):
        raise ValueError("elm.activation must be 'tansig' or 'sigmoid'")
    if family == "svm":
        if p["kernel"] not in ("rbf", "linear"):
            raise ValueError("svm.kernel must be 'rbf' or 'linear'")
        if not (p["gamma"] > 0 and p["cost"] > 0):
            raise ValueError("svm.gamma and svm.cost must be positive")
        if p["platt_folds"] < 2:
            raise ValueError("svm.platt_folds must be at least 2")
    if family == "signal_extraction" and not 0 <= p["mu"] <= 1:
        raise ValueError("signal_extraction.mu must lie in [0, 1]")
    return p


@dataclass(frozen=True)
class MethodSpec:
    """One classifier family with its free parameters and seed.

    ``name`` labels the method in reports; it defaults to the family.
    """

    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown method family {self.family!r}; expected one of {FAMILIES}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        object.__setattr__(self, "params", _check_params(self.family, dict(self.params)))

    @property
    def label(self) -> str:
        return self.name or self.family

    def with_params(self, **params) -> "MethodSpec":
        return MethodSpec(self.family, {**self.params, **params}, self.seed, self.name)

    def with_seed(self, seed: int) -> "MethodSpec":
        return MethodSpec(self.family, self.params, seed, self.name)

    def to_dict(self) -> dict:
        d = {"family": self.family, "params": dict(self.params), "seed": self.seed}
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        extra = set(d) - {"family", "params", "seed", "name", "grid"}
        if extra:
            raise ValueError(f"unknown method keys: {sorted(extra)}")
        if "family" not in d:
            raise ValueError("method entry needs a 'family'")
        return cls(d["family"], dict(d.get("params") or {}), int(d.get("seed", 0)), d.get("name"))


def benchmark_specs(seed: int = 0) -> list[MethodSpec]:
    """All twelve families at their default/benchmark parameters."""
    return [MethodSpec(f, seed=seed) for f in FAMILIES]


def calibrate_ecdf(in_sample, p):
    """Share of (sorted) in-sample probabilities that are ``<= p``.

    Works elementwise on arrays. The map is non-decreasing in ``p``.
    """
    ref = np.asarray(in_sample, dtype=float)
    if ref.size == 0:
        raise ValueError("ECDF needs at least one in-sample value")
    out = np.searchsorted(ref, p, side="right") / ref.size
    return float(out) if np.ndim(out) == 0 else out


class Standardizer:
    """Train-set mean/sd scaling; constant columns are only centred."""

    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd = np.where(sd > 0, sd, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.sd


class Classifier:
    """Base for the per-family estimators: ``fit(X, y)``, ``predict_proba(X)``."""

    converged = True

    def __init__(self, params: dict, seed: int):
        self.params = params
        self.seed = seed

    def fit(self, X: np.ndarray, y: np.ndarray, feature_names: Sequence[str] | None = None):
        raise NotImplementedError

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _registry():
    from . import discriminant, linear, neighbors, neural, signal, svm, trees
    return {
        "signal_extraction": signal.SignalExtraction,
        "lda": discriminant.LDA,
        "qda": discriminant.QDA,
        "logit": linear.Logit,
        "logit_lasso": linear.LogitLasso,
        "naive_bayes": discriminant.NaiveBayes,
        "knn": neighbors.KNN,
        "tree": trees.ClassificationTree,
        "random_forest": trees.RandomForest,
        "ann": neural.ANN,
        "elm": neural.ELM,
        "svm": svm.SVM,
    }


@dataclass(frozen=True)
class FittedModel:
    """A fitted classifier plus the sorted in-sample probabilities for calibration."""

    spec: MethodSpec
    estimator: Classifier
    in_sample_probs: np.ndarray
    n_features: int
    converged: bool = True
    train_probs: np.ndarray | None = None  # in-sample probabilities in training-row order

    def predict_proba(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.clip(self.estimator.predict_proba(X), 0.0, 1.0)

    def predict_calibrated(self, X) -> np.ndarray:
        """Out-of-sample probabilities as percentiles of the in-sample ones."""
        return calibrate_ecdf(self.in_sample_probs, self.predict_proba(X))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError("features must be a 2d array")
    return X


def fit(spec: MethodSpec, X, y, feature_names: Sequence[str] | None = None) -> FittedModel:
    """Fit ``spec`` on ``(X, y)``; returns an immutable :class:`FittedModel`."""
    X = _as_matrix(X)
    y = np.asarray(y).astype(np.int8)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    if X.shape[0] == 0:
        raise InsufficientDataError("empty training set")
    if not np.all(np.isfinite(X)):
        raise ValueError("training features contain missing or non-finite values")
    n1 = int(y.sum())
    if n1 == 0 or n1 == y.size:
        raise InsufficientDataError(f"{spec.family}: training data has a single class")
    est = _registry()[spec.family](spec.params, spec.seed)
    est.fit(X, y, feature_names)
    train = np.clip(est.predict_proba(X), 0.0, 1.0)
    return FittedModel(spec, est, np.sort(train), X.shape[1], bool(est.converged), train)


def predict_proba(model: FittedModel, X) -> np.ndarray:
    return model.predict_proba(X)


def warn(msg: str, category=UserWarning):
    warnings.warn(msg, category, stacklevel=3)
