import numpy as np
import pytest

from ewrace.classifiers import MethodSpec
from ewrace.evaluation import Preference
from ewrace.parallel import WORKERS_ENV, map_ordered, resolve_workers
from ewrace.uncertainty import repeated_cv_performance


def square(x):
    return x * x


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers(None) == 1
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert resolve_workers(None) == 3
    assert resolve_workers(2) == 2
    with pytest.raises(ValueError):
        resolve_workers(0)


def test_map_ordered_keeps_order():
    assert map_ordered(square, range(7), 2) == [x * x for x in range(7)]


def test_results_independent_of_worker_count(small_xy):
    X, y = small_xy
    specs = [MethodSpec("logit"), MethodSpec("knn", {"k": 5})]
    one = repeated_cv_performance(specs, X, y, Preference(0.8), K=5, S=4, workers=1)
    two = repeated_cv_performance(specs, X, y, Preference(0.8), K=5, S=4, workers=2)
    assert one.names == two.names
    assert np.array_equal(one.ur, two.ur, equal_nan=True)
    assert np.array_equal(one.auc, two.auc, equal_nan=True)
