import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ewrace.evaluation import (
    ContingencyCounts,
    DegenerateClassError,
    Preference,
    candidate_thresholds,
    contingency,
    evaluate,
    loss,
    optimize_threshold,
    roc_auc,
    usefulness,
)

PREF = Preference(0.8)


def oracle_usefulness(tp, fp, fn, tn, mu):
    """Direct exact-arithmetic evaluation of loss, ua and ur."""
    tp, fp, fn, tn = map(Fraction, (tp, fp, fn, tn))
    mu = Fraction(mu)
    n = tp + fp + fn + tn
    P1, P2 = (tp + fn) / n, (fp + tn) / n
    L = mu * fn / (tp + fn) * P1 + (1 - mu) * fp / (fp + tn) * P2
    base = min(mu * P1, (1 - mu) * P2)
    return L, base - L, (base - L) / base


def pairwise_auc(scores, labels):
    pos = [s for s, c in zip(scores, labels) if c]
    neg = [s for s, c in zip(scores, labels) if not c]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


# -- contingency -----------------------------------------------------------------------

def test_contingency_examples():
    assert contingency([1, 0, 1, 0], [1, 0, 1, 0]) == ContingencyCounts(2, 0, 0, 2)
    assert contingency([1, 1, 1], [0, 0, 0]) == ContingencyCounts(0, 3, 0, 0)
    # position-by-position tally: the labels hold four pre-crisis quarters
    c = contingency([1, 0, 0, 1, 1, 0, 1, 0, 0, 0], [1, 1, 1, 0, 0, 0, 1, 0, 0, 0])
    assert c == ContingencyCounts(tp=2, fp=2, fn=2, tn=4)
    c = contingency([1, 0, 1, 1, 1, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 1, 1, 0, 0, 0])
    assert c == ContingencyCounts(tp=1, fp=3, fn=3, tn=3)


def test_contingency_length_mismatch():
    with pytest.raises(ValueError):
        contingency([1, 0], [1])


# -- loss and usefulness ---------------------------------------------------------------

def test_worked_loss_example():
    c = ContingencyCounts(tp=2, fp=3, fn=1, tn=4)
    assert loss(c, PREF) == 0.14
    assert usefulness(c, PREF) == (0.0, 0.0)


def test_usefulness_example_six_sevenths():
    ua, ur = usefulness(ContingencyCounts(tp=3, fp=1, fn=0, tn=6), PREF)
    assert loss(ContingencyCounts(3, 1, 0, 6), PREF) == 0.02
    assert ua == 0.12
    assert ur == 6 / 7


def test_trivial_policies():
    perfect = ContingencyCounts(tp=3, fp=0, fn=0, tn=7)
    assert loss(perfect, PREF) == 0.0
    assert usefulness(perfect, PREF)[1] == 1.0
    never = ContingencyCounts(tp=0, fp=0, fn=3, tn=7)
    always = ContingencyCounts(tp=3, fp=7, fn=0, tn=0)
    assert loss(never, PREF) == pytest.approx(0.8 * 0.3)
    assert loss(always, PREF) == pytest.approx(0.2 * 0.7)
    assert usefulness(never, PREF)[0] <= 1e-15 and usefulness(always, PREF)[0] <= 1e-15


def test_single_class_is_degenerate():
    with pytest.raises(DegenerateClassError, match="degenerate class sizes"):
        loss(ContingencyCounts(tp=0, fp=2, fn=0, tn=3), PREF)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50),
       st.floats(0.01, 0.99))
def test_usefulness_against_exact_oracle(tp, fp, fn, tn, mu):
    if tp + fn == 0 or fp + tn == 0:
        return
    c = ContingencyCounts(tp, fp, fn, tn)
    L, ua, ur = oracle_usefulness(tp, fp, fn, tn, mu)
    assert loss(c, Preference(mu)) == pytest.approx(float(L), abs=1e-12)
    got_ua, got_ur = usefulness(c, Preference(mu))
    assert got_ua == pytest.approx(float(ua), abs=1e-12)
    assert got_ur == pytest.approx(float(ur), abs=1e-12)
    assert got_ur <= 1.0 + 1e-15
    assert got_ua <= min(mu * (tp + fn), (1 - mu) * (fp + tn)) / (tp + fp + fn + tn) + 1e-15


def test_decimal_mu_is_exact():
    assert PREF.rational == (4, 5)
    assert Preference(0.1 + 0.2).rational is None
    # 0.8 * 2 missed crises weigh exactly as much as 0.2 * 8 false alarms
    a = ContingencyCounts(tp=0, fp=0, fn=2, tn=18)
    b = ContingencyCounts(tp=2, fp=8, fn=0, tn=10)
    assert loss(a, PREF) == loss(b, PREF) == 0.08


def test_threshold_ties_broken_exactly():
    # signalling the top 10 costs 8 false alarms, signalling none misses 2 crises:
    # equal losses at mu = 0.8, so the larger threshold (no signal) wins
    p = np.r_[np.full(10, 0.8), np.full(10, 0.1)]
    y = np.r_[np.ones(2), np.zeros(18)]
    tau, ur = optimize_threshold(p, y, PREF)
    assert tau == 1.0 and ur == 0.0


def test_out_of_sample_p1_override():
    c = ContingencyCounts(tp=2, fp=3, fn=1, tn=4)
    mu = 0.8
    L = mu * (1 / 3) * 0.5 + 0.2 * (3 / 7) * 0.5
    assert loss(c, PREF, p1=0.5) == pytest.approx(L)


# -- threshold -------------------------------------------------------------------------

def test_threshold_example():
    tau, ur = optimize_threshold([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], PREF)
    assert tau == 0.5 and ur == 1.0


def test_threshold_degenerate_and_constant():
    with pytest.raises(DegenerateClassError):
        optimize_threshold([0.2, 0.4], [1, 1], PREF)
    tau, ur = optimize_threshold(np.full(10, 0.3), [1, 1, 1] + [0] * 7, PREF)
    assert tau in (0.0, 1.0) and ur <= 0.0


def test_threshold_rejects_out_of_range():
    with pytest.raises(ValueError):
        optimize_threshold([1.2, 0.1], [1, 0], PREF)


def test_candidates():
    assert candidate_thresholds([0.2, 0.8, 0.2]).tolist() == [0.0, 0.5, 1.0]
    assert candidate_thresholds([0.1, 0.3, 0.9]).tolist() == pytest.approx([0.0, 0.2, 0.6, 1.0])


@pytest.mark.parametrize("seed", range(30))
def test_threshold_is_exhaustive_optimum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 120))
    p = np.round(rng.random(n), int(rng.integers(1, 4)))
    y = (rng.random(n) < 0.3).astype(int)
    y[:2] = (0, 1)
    pref = Preference(float(rng.uniform(0.1, 0.9)))
    tau, ur = optimize_threshold(p, y, pref)
    scan = [(t, usefulness(contingency(p > t, y), pref)) for t in candidate_thresholds(p)]
    best_ur = max(u[1] for _, u in scan)
    assert ur == best_ur
    # largest among the minimizers
    assert tau == max(t for t, u in scan if u[1] == best_ur)


# -- AUC -------------------------------------------------------------------------------

def test_auc_separated_and_tie_credit():
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    # pairs (0.5 vs 0.5) tie and (0.5 vs 0.2) win: (0.5 + 1) / 2
    assert roc_auc([0.5, 0.5, 0.2], [1, 0, 0]) == 0.75


@pytest.mark.parametrize("seed", range(20))
def test_auc_matches_pairwise_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(2, 150))
    s = np.round(rng.random(n), 1 + seed % 3)
    y = rng.integers(0, 2, n)
    y[:2] = (0, 1)
    assert roc_auc(s, y) == pytest.approx(pairwise_auc(s, y), abs=1e-12)


def test_auc_invariant_to_monotone_transform():
    rng = np.random.default_rng(3)
    s = rng.random(80)
    y = (rng.random(80) < 0.4).astype(int)
    assert roc_auc(np.exp(3 * s) - 7, y) == roc_auc(s, y)


def test_auc_degenerate():
    with pytest.raises(DegenerateClassError):
        roc_auc([0.1, 0.2], [0, 0])


def test_evaluate_record():
    res = evaluate([1, 0, 1, 1, 1, 1, 0, 0, 0, 0], [1, 1, 1, 0, 0, 0, 0, 0, 0, 0], PREF,
                   scores=np.linspace(1, 0, 10), tau_star=0.5)
    assert res.t1 == pytest.approx(1 / 3) and res.t2 == pytest.approx(3 / 7)
    assert res.loss == pytest.approx(0.14)
    assert not math.isnan(res.auc)
    row = res.as_row()
    assert list(row)[:4] == ["ur", "ua", "auc", "tau"]
