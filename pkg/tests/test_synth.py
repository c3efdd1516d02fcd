import numpy as np
import pandas as pd
import pytest

from ewrace.classifiers import MethodSpec
from ewrace.evaluation import Preference
from ewrace.experiments import kfold_race
from ewrace.panel_data import build_dataset
from ewrace.synth import synth_panel

PREF = Preference(0.8)
CHEAP = ("logit", "lda", "naive_bayes", "knn")


def kfold_urs(strength, seeds=range(20)):
    urs = {}
    for seed in seeds:
        raw, events = synth_panel(seed, signal_strength=strength)
        X, y = build_dataset(raw, events).estimation_arrays()
        race = kfold_race([MethodSpec(f) for f in CHEAP], X, y, PREF, 10, seed, ())
        for name, o in race.outcomes.items():
            urs.setdefault(name, []).append(o.result.ur)
    return urs


def test_shape_and_determinism():
    raw, events = synth_panel(2, n_countries=4, n_quarters=60, n_events=4)
    assert len(raw) == 240 and raw.countries == ["C01", "C02", "C03", "C04"]
    assert raw.kinds["x1"] == "accounting" and raw.kinds["x2"] == "market"
    again, events2 = synth_panel(2, n_countries=4, n_quarters=60, n_events=4)
    pd.testing.assert_frame_equal(raw.frame, again.frame)
    assert events == events2
    other, _ = synth_panel(3, n_countries=4, n_quarters=60, n_events=4)
    assert not raw.frame.equals(other.frame)


def test_events_dealt_round_robin():
    _, events = synth_panel(0, n_countries=5, n_quarters=100, n_events=10)
    counts = pd.Series([e.country for e in events]).value_counts()
    assert len(events) == 10 and set(counts) == {2}


def test_impossible_event_count_rejected():
    with pytest.raises(ValueError):
        synth_panel(0, n_countries=1, n_quarters=30, n_events=5)


@pytest.mark.slow
def test_no_signal_is_not_useful():
    urs = kfold_urs(0.0)
    for name, v in urs.items():
        assert np.mean(v) <= 0.0, name


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::ewrace.classifiers.ConvergenceWarning")
def test_strong_signal_is_nearly_perfect():
    urs = kfold_urs(3.0)
    assert np.median(urs["logit"]) >= 0.9
