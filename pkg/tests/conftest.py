import warnings

import numpy as np
import pytest

from ewrace.panel_data import build_dataset
from ewrace.synth import synth_panel


@pytest.fixture(autouse=True)
def _quiet_numerics():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@pytest.fixture(scope="session")
def synthetic():
    """Default synthetic panel (seed 0) as (raw, events, estimation X, y)."""
    raw, events = synth_panel(0, signal_strength=1.125)
    data = build_dataset(raw, events)
    X, y = data.estimation_arrays()
    return raw, events, X, y


@pytest.fixture(scope="session")
def small_xy():
    """300 rows, two informative Gaussian features, about 20% positives."""
    rng = np.random.default_rng(7)
    y = (rng.random(300) < 0.2).astype(np.int8)
    X = rng.normal(size=(300, 3))
    X[:, 0] += 1.5 * y
    X[:, 1] -= 1.0 * y
    return X, y
