import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ewrace.ensembles import (
    AggregateSpec,
    aggregate_probs,
    best_index,
    best_of,
    normalized_weights,
    vote,
    vote_share,
)

prob_matrix = st.integers(1, 6).flatmap(
    lambda m: arrays(float, (m, 7), elements=st.floats(0.0, 1.0)))
signal_matrix = st.integers(1, 13).flatmap(
    lambda m: arrays(np.int8, (m, 9), elements=st.integers(0, 1)))


def test_best_of():
    s = np.array([[1, 0, 1], [0, 1, 1]])
    assert best_of([0.4], s[:1]).tolist() == [1, 0, 1]
    assert best_of([0.3, 0.7], s).tolist() == [0, 1, 1]
    assert best_index([0.5, 0.5]) == 0
    assert best_index([np.nan, 0.1]) == 1


def test_vote_examples():
    assert vote([[1], [1], [0]]).tolist() == [1]
    assert vote([[1], [0]]).tolist() == [0]
    assert vote(np.r_[np.ones(7), np.zeros(5)][:, None]).tolist() == [1]
    assert vote(np.r_[np.ones(6), np.zeros(6)][:, None]).tolist() == [0]


@settings(max_examples=200, deadline=None)
@given(signal_matrix)
def test_vote_is_strict_majority_of_mean(s):
    assert np.array_equal(vote(s), (s.mean(axis=0) > 0.5).astype(np.int8))
    assert np.array_equal(vote(s), (vote_share(s) > 0.5).astype(np.int8))


def test_weight_drop_and_renormalize():
    assert np.allclose(normalized_weights([0.2, -0.1, 0.4], 3), [1 / 3, 0, 2 / 3])
    assert np.array_equal(normalized_weights([-0.2, -0.1, -0.4], 3), np.full(3, 1 / 3))
    assert np.array_equal(normalized_weights([0.0, 0.0], 2), [0.5, 0.5])
    assert np.allclose(normalized_weights([np.nan, 1.0], 2), [0.0, 1.0])


@settings(max_examples=200, deadline=None)
@given(prob_matrix)
def test_uniform_weights_give_exact_mean(p):
    m = p.shape[0]
    assert np.array_equal(aggregate_probs(p), p.mean(axis=0))
    assert np.array_equal(aggregate_probs(p, np.full(m, 0.37)), p.mean(axis=0))
    assert np.array_equal(aggregate_probs(p, -np.ones(m)), p.mean(axis=0))


@settings(max_examples=200, deadline=None)
@given(prob_matrix, st.data())
def test_weighted_mean_is_convex(p, data):
    w = data.draw(arrays(float, p.shape[0], elements=st.floats(-1.0, 1.0)))
    a = aggregate_probs(p, w)
    assert np.all((a >= 0) & (a <= 1))
    assert np.all(a >= p.min(axis=0) - 1e-12) and np.all(a <= p.max(axis=0) + 1e-12)


def test_weighted_mean_example():
    p = np.array([[0.9, 0.3], [0.0, 1.0], [0.6, 0.6]])
    got = aggregate_probs(p, [0.2, -0.1, 0.4])
    assert np.allclose(got, [(0.9 + 2 * 0.6) / 3, (0.3 + 2 * 0.6) / 3])


def test_permutation_changes_nothing_but_ties():
    rng = np.random.default_rng(0)
    p = rng.random((4, 20))
    w = np.array([0.1, 0.5, 0.2, 0.3])
    perm = np.array([2, 0, 3, 1])
    assert np.allclose(aggregate_probs(p[perm], w[perm]), aggregate_probs(p, w))
    s = (p > 0.5).astype(int)
    assert np.array_equal(vote(s[perm]), vote(s))
    assert np.array_equal(best_of(w[perm], s[perm]), best_of(w, s))


def test_aggregate_spec():
    assert AggregateSpec("weighted_mean", "auc").label == "weighted_mean_auc"
    assert AggregateSpec("mean").label == "mean"
    with pytest.raises(ValueError):
        AggregateSpec("stacking")
    with pytest.raises(ValueError):
        AggregateSpec("mean", "loss")
