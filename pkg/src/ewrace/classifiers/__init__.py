"""Twelve probabilistic classifiers behind one fit/predict contract."""
from .base import (
    DEFAULT_PARAMS,
    FAMILIES,
    ConvergenceWarning,
    FittedModel,
    InsufficientDataError,
    MethodSpec,
    RegularizationWarning,
    benchmark_specs,
    calibrate_ecdf,
    fit,
    predict_proba,
)
from .signal import IndicatorRank, signal_extraction_rank

__all__ = [
    "DEFAULT_PARAMS", "FAMILIES", "ConvergenceWarning", "FittedModel", "IndicatorRank",
    "InsufficientDataError", "MethodSpec", "RegularizationWarning", "benchmark_specs",
    "calibrate_ecdf", "fit", "predict_proba", "signal_extraction_rank",
]
