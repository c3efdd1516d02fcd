import warnings

import numpy as np
import pytest

from ewrace.classifiers import MethodSpec
from ewrace.classifiers.linear import fit_logit
from ewrace.evaluation import ContingencyCounts, DegenerateClassError, Preference, usefulness
from ewrace.experiments import (
    RecursiveConfig,
    grid_points,
    grid_search,
    kfold_race,
    make_folds,
    prepare_recursive,
    quarter_cells,
    recursive_quarters,
    recursive_race,
    training_mask,
)
from ewrace.folds import stratified_folds
from ewrace.panel_data import build_dataset, parse_quarter
from ewrace.synth import synth_panel

PREF = Preference(0.8)


def loo_oracle(X, y, mu):
    """Leave-one-out logit with ECDF calibration and an exhaustive threshold scan."""
    tp = fp = fn = tn = 0
    for i in range(len(y)):
        keep = np.arange(len(y)) != i
        Xtr, ytr = X[keep], y[keep]
        beta, _ = fit_logit(Xtr, ytr)
        prob = lambda A: 1.0 / (1.0 + np.exp(-(beta[0] + A @ beta[1:])))  # noqa: E731
        ref = prob(Xtr)
        cal = np.array([np.mean(ref <= p) for p in ref])
        # exhaustive scan over every cut between distinct calibrated values
        levels = np.unique(cal)
        cands = np.unique(np.r_[0.0, (levels[:-1] + levels[1:]) / 2, 1.0])
        best = None
        for t in cands:
            s = cal > t
            c = ContingencyCounts(int(np.sum(s & (ytr == 1))), int(np.sum(s & (ytr == 0))),
                                  int(np.sum(~s & (ytr == 1))), int(np.sum(~s & (ytr == 0))))
            L = -usefulness(c, Preference(mu))[0]
            if best is None or L <= best[0]:
                best = (L, t)
        out = np.mean(ref <= prob(X[i:i + 1])[0]) > best[1]
        if y[i]:
            tp, fn = tp + out, fn + (not out)
        else:
            fp, tn = fp + out, tn + (not out)
    return ContingencyCounts(int(tp), int(fp), int(fn), int(tn))


# -- folds -----------------------------------------------------------------------------

def test_stratified_folds_balanced():
    y = np.r_[np.ones(23), np.zeros(177)].astype(np.int8)
    f = stratified_folds(y, 10, seed=3)
    sizes = np.bincount(f, minlength=10)
    assert sizes.max() - sizes.min() <= 1
    assert all(y[f == k].any() for k in range(10))
    assert np.array_equal(f, stratified_folds(y, 10, seed=3))


def test_fold_assignment_shared_by_methods(small_xy):
    X, y = small_xy
    specs = [MethodSpec("logit"), MethodSpec("lda"), MethodSpec("knn", {"k": 5})]
    together = kfold_race(specs, X, y, PREF, K=5, seed=2, aggregates=())
    for s in specs:
        alone = kfold_race([s], X, y, PREF, K=5, seed=2, aggregates=())
        assert np.array_equal(alone.folds, together.folds)
        assert np.array_equal(alone[s.label].probs, together[s.label].probs)
    assert np.array_equal(together.folds, make_folds(y, 5, 2))


def test_fold_attempts_exhausted():
    y = np.array([1, 0, 0, 0, 0], dtype=np.int8)
    with pytest.raises(DegenerateClassError):
        make_folds(y, 2, 0)


# -- K-fold race -----------------------------------------------------------------------

def test_loo_matches_oracle():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    y = (X[:, 0] + rng.normal(scale=1.0, size=30) > 0.6).astype(np.int8)
    res = kfold_race([MethodSpec("logit")], X, y, PREF, K=30, seed=0, aggregates=())
    assert res["logit"].result.counts == loo_oracle(X, y, 0.8)


@pytest.mark.parametrize("family", ["logit", "logit_lasso", "lda", "qda", "naive_bayes", "knn",
                                    "tree", "random_forest", "signal_extraction", "ann", "elm",
                                    "svm"])
def test_separable_panel_attains_one(family):
    # two point masses: held-out rows repeat training rows exactly
    y = np.r_[np.ones(40), np.zeros(160)].astype(np.int8)
    X = np.column_stack([4.0 * y, -2.0 * y])
    params = {"n_trees": 20, "mtry": 2} if family == "random_forest" else {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = kfold_race([MethodSpec(family, params)], X, y, PREF, K=5, seed=0, aggregates=())
    assert res[family].result.ur == 1.0


@pytest.mark.parametrize("family", ["knn", "tree", "random_forest"])
def test_separable_noisy_panel_attains_one(family):
    rng = np.random.default_rng(0)
    y = np.r_[np.ones(40), np.zeros(160)].astype(np.int8)
    X = rng.normal(size=(200, 2))
    X[:, 0] += np.where(y == 1, 10.0, 0.0)
    params = {"n_trees": 20, "mtry": 2} if family == "random_forest" else {}
    res = kfold_race([MethodSpec(family, params)], X, y, PREF, K=5, seed=0, aggregates=())
    assert res[family].result.ur == 1.0


def test_kfold_race_with_aggregates(small_xy):
    X, y = small_xy
    specs = [MethodSpec("logit"), MethodSpec("lda"), MethodSpec("knn", {"k": 5})]
    res = kfold_race(specs, X, y, PREF, K=5, seed=1)
    assert res.names == ["logit", "lda", "knn", "best_of", "vote", "mean", "weighted_mean"]
    assert np.isnan(res["vote"].result.auc)
    ranking = res.ranking()
    urs = [r["ur"] for r in ranking]
    assert urs == sorted(urs, reverse=True)
    # contingency cells are summed over folds, every row counted once
    assert res["logit"].result.counts.n == len(y)
    # best_of reproduces the chosen method fold by fold
    b = res["best_of"]
    for k, chosen in enumerate(b.chosen):
        rows = res.folds[b.rows] == k
        assert np.array_equal(b.probs[rows], res[chosen].probs[rows])


def test_duplicate_labels_are_disambiguated(small_xy):
    X, y = small_xy
    res = kfold_race([MethodSpec("logit"), MethodSpec("logit")], X, y, PREF, K=5,
                     aggregates=())
    assert res.names == ["logit", "logit#2"]
    assert res["logit"].result == res["logit#2"].result


def test_failing_method_dropped_with_warning():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 8))
    y = np.r_[np.ones(6), np.zeros(54)].astype(np.int8)
    with pytest.warns(UserWarning, match="qda"):
        res = kfold_race([MethodSpec("logit"), MethodSpec("qda")], X, y, PREF, K=3,
                         aggregates=("mean",))
    assert "qda" not in res.names and "qda" in res.failures


# -- grid search -----------------------------------------------------------------------

def test_grid_of_one_point(small_xy):
    X, y = small_xy
    res = grid_search("knn", {"k": [7]}, X, y, PREF, K=5)
    assert res.best.params["k"] == 7


def test_grid_points_order():
    assert grid_points({"a": [1, 2], "b": ["x", "y"]}) == [
        {"a": 1, "b": "x"}, {"a": 1, "b": "y"}, {"a": 2, "b": "x"}, {"a": 2, "b": "y"}]


def test_ann_grid_returns_exhaustive_best(small_xy):
    X, y = small_xy
    grid = {"hidden": [4, 8], "max_iter": [100, 200], "decay": [0.005, 0.05]}
    res = grid_search("ann", grid, X, y, PREF, K=5, seed=0)
    assert {"hidden": 8, "max_iter": 200, "decay": 0.005} in [r["params"] for r in res.table]
    rescan = [kfold_race([MethodSpec("ann", p)], X, y, PREF, K=5, seed=0,
                         aggregates=())["ann"].result.ur for p in grid_points(grid)]
    chosen = kfold_race([res.best], X, y, PREF, K=5, seed=0, aggregates=())["ann"].result.ur
    assert chosen == max(rescan)
    assert grid_points(grid)[int(np.argmax(rescan))] == {k: res.best.params[k] for k in grid}


def test_grid_all_failing_raises():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 6))
    y = np.r_[np.ones(5), np.zeros(35)].astype(np.int8)
    with pytest.raises(ValueError, match="qda"):
        grid_search("qda", {}, X, y, PREF, K=2)


# -- recursive race --------------------------------------------------------------------

@pytest.fixture(scope="module")
def recursive_setup():
    raw, events = synth_panel(3, n_countries=8, n_quarters=80, n_events=16,
                              signal_strength=1.5)
    cfg = RecursiveConfig(start=parse_quarter("2000Q1"))
    return raw, events, cfg


def test_recursive_start_honoured(recursive_setup):
    raw, events, cfg = recursive_setup
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = recursive_race([MethodSpec("logit"), MethodSpec("lda")], raw, events, PREF, cfg)
    for o in res.outcomes.values():
        assert res.quarters[o.rows].min() >= cfg.start
    assert not np.isnan(res["logit"].result.ur)


def test_recursive_training_set_ignores_future(recursive_setup):
    raw, events, cfg = recursive_setup
    full = prepare_recursive(raw, events, cfg)
    for q in (parse_quarter("2003Q2"), parse_quarter("2006Q1")):
        cut = prepare_recursive(raw.truncate(q + 1), events, cfg)
        a, b = training_mask(full, q), training_mask(cut, q)
        assert np.array_equal(full.X[a], cut.X[b])
        assert np.array_equal(full.y[a], cut.y[b])
        ca, _, ta, _ = quarter_cells(q, [MethodSpec("logit")], ["logit"], full, cfg, PREF, [])
        cb, _, tb, _ = quarter_cells(q, [MethodSpec("logit")], ["logit"], cut, cfg, PREF, [])
        assert np.array_equal(ca["logit"].out_probs, cb["logit"].out_probs)
        assert ca["logit"].tau == cb["logit"].tau


def test_recursive_pooling_equals_concatenation(recursive_setup):
    raw, events, cfg = recursive_setup
    res = recursive_race([MethodSpec("logit")], raw, events, PREF, cfg, aggregates=())
    data = prepare_recursive(raw, events, cfg)
    o = res["logit"]
    sig, lab = [], []
    for q in recursive_quarters(data, cfg):
        cells, _, test, _ = quarter_cells(q, [MethodSpec("logit")], ["logit"], data, cfg, PREF, [])
        if cells:
            ok = data.usable[test]
            sig.append(cells["logit"].out_probs[ok] > cells["logit"].tau)
            lab.append(data.y[test][ok])
    sig, lab = np.concatenate(sig), np.concatenate(lab).astype(bool)
    c = o.result.counts
    assert (c.tp, c.fp, c.fn, c.tn) == (int(np.sum(sig & lab)), int(np.sum(sig & ~lab)),
                                        int(np.sum(~sig & lab)), int(np.sum(~sig & ~lab)))


def test_method_start_delays_qda(recursive_setup):
    raw, events, _ = recursive_setup
    late = parse_quarter("2001Q1")
    cfg = RecursiveConfig(start=parse_quarter("2000Q1"), method_start={"qda": late})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = recursive_race([MethodSpec("logit"), MethodSpec("qda")], raw, events, PREF, cfg,
                             aggregates=())
    assert res.quarters[res["qda"].rows].min() >= late
    assert res.quarters[res["logit"].rows].min() < late


def test_majority_class_scorer_not_useful(recursive_setup):
    raw, events, cfg = recursive_setup
    data = prepare_recursive(raw, events, cfg)
    # a constant indicator makes signal extraction a trivial always/never policy
    data.X[:, 0] = 1.0
    from ewrace.experiments import recursive_race_data
    res = recursive_race_data([MethodSpec("signal_extraction", {"indicator": 0})], data, PREF,
                              cfg, aggregates=())
    assert res["signal_extraction"].result.ur <= 0.0


@pytest.mark.slow
def test_recursive_close_to_kfold_on_stationary_panel():
    gaps = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed in range(20):
            raw, events = synth_panel(seed, signal_strength=1.125)
            X, y = build_dataset(raw, events).estimation_arrays()
            cv = kfold_race([MethodSpec("logit")], X, y, PREF, K=10, seed=seed, aggregates=())
            rec = recursive_race([MethodSpec("logit")], raw, events, PREF,
                                 RecursiveConfig(start=parse_quarter("2000Q1")), aggregates=())
            gaps.append(rec["logit"].result.ur - cv["logit"].result.ur)
    assert abs(np.mean(gaps)) <= 0.15
