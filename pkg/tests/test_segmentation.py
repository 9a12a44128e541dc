import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrhlp.core import Hyperparams, MrhlpModel, RegimeParams, TimeSeries
from mrhlp.exceptions import DataError, DimensionMismatch, LengthMismatch
from mrhlp.segmentation import (
    best_assignment,
    contingency,
    fp_fn_rates,
    is_contiguous,
    map_segment,
    match_labels,
    pooled_accuracy,
    posterior_segment,
    runs,
)

from conftest import random_model


def model_with_weights(W, d=1):
    W = np.asarray(W, dtype=float)
    K = W.shape[0]
    regimes = [RegimeParams(np.zeros((1, d)), np.eye(d))] * K
    return MrhlpModel(Hyperparams(K, 0, W.shape[1] - 1), W, regimes)


def brute_force_accuracy(pred, truth):
    """Try every injective relabeling of pred's alphabet onto truth's (padded) alphabet."""
    p_cls, t_cls = sorted(set(pred)), sorted(set(truth))
    targets = t_cls + [max(t_cls) + 1 + j for j in range(max(0, len(p_cls) - len(t_cls)))]
    best = 0
    for perm in itertools.permutations(targets, len(p_cls)):
        mapping = dict(zip(p_cls, perm))
        best = max(best, sum(mapping[a] == b for a, b in zip(pred, truth)))
    return best / len(pred)


def test_single_regime_labels_all_one(rng):
    seg = map_segment(TimeSeries(np.arange(7.0), np.zeros(7)), model_with_weights([[0.0, 0.0]]))
    assert np.all(seg.labels == 1)


def test_zero_weights_tie_to_first_regime():
    seg = map_segment(TimeSeries(np.arange(9.0), np.zeros(9)), model_with_weights(np.zeros((4, 2))))
    assert np.all(seg.labels == 1)
    np.testing.assert_allclose(seg.pi_trace, 0.25)


def test_linear_crossing_switch_point():
    n = 10
    t = np.linspace(0.0, 3.0, n)
    seg = map_segment(TimeSeries(t, np.zeros(n)), model_with_weights([[-5.0, 10.0], [0.0, 0.0]]))
    s = np.arange(n) / (n - 1)
    first = int(np.flatnonzero(10 * s - 5 > 0)[0])
    assert first == 5
    assert runs(seg.labels) == [(2, 0, first), (1, first, n)]


def test_map_segment_rows_sum_to_one(rng):
    m = random_model(rng, 5, 2, u=3)
    seg = map_segment(TimeSeries(np.arange(40.0), np.zeros((40, 2))), m)
    assert np.max(np.abs(seg.pi_trace.sum(axis=1) - 1)) <= 1e-12
    assert np.array_equal(seg.labels, np.argmax(seg.pi_trace, axis=1) + 1)


def test_map_segment_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        map_segment(TimeSeries(np.arange(4.0), np.zeros((4, 3))), random_model(rng, 2, 2))


def test_map_segment_uses_model_time_range():
    m = model_with_weights([[-5.0, 10.0], [0.0, 0.0]]).with_time_range((0.0, 100.0))
    seg = map_segment(TimeSeries(np.array([10.0, 20.0, 60.0, 90.0]), np.zeros(4)), m)
    assert seg.labels.tolist() == [2, 2, 1, 1]


def test_posterior_segment():
    assert posterior_segment([[0.2, 0.8]]).tolist() == [2]
    assert posterior_segment([[0.5, 0.5]]).tolist() == [1]
    assert posterior_segment(np.eye(3)).tolist() == [1, 2, 3]
    with pytest.raises(DataError):
        posterior_segment([[0.7, 0.7]])


def test_match_identical():
    r = match_labels([1, 2, 3, 3], [1, 2, 3, 3])
    assert r.accuracy == 1.0
    assert r.permutation == {1: 1, 2: 2, 3: 3}


def test_match_swapped():
    truth = np.array([1, 1, 2, 2, 2, 1])
    r = match_labels(3 - truth, truth)
    assert r.accuracy == 1.0
    assert r.permutation == {1: 2, 2: 1}


def test_match_small_hand_case():
    truth, pred = [1, 1, 2, 2], [2, 2, 2, 1]
    # identity: 1/4 correct; swap 1<->2 gives (1, 1, 1, 2): 3/4 correct
    assert brute_force_accuracy(pred, truth) == 0.75
    r = match_labels(pred, truth)
    assert r.permutation == {1: 2, 2: 1}
    assert r.accuracy == 0.75
    assert r.identity_accuracy == 0.25
    assert r.confusion.tolist() == [[2, 0], [1, 1]]


def test_match_length_mismatch():
    with pytest.raises(LengthMismatch):
        match_labels([1, 2], [1, 2, 3])


def test_match_unequal_alphabets():
    truth = [1, 1, 2, 2, 3, 3]
    r = match_labels([5, 5, 5, 5, 7, 7], truth)
    assert r.accuracy == pytest.approx(4 / 6)
    assert r.confusion.sum() == 6 and r.confusion.shape == (3, 3)
    r = match_labels([1, 2, 3, 4, 1, 2], [1, 1, 1, 2, 2, 2])
    assert r.accuracy == pytest.approx(brute_force_accuracy([1, 2, 3, 4, 1, 2], [1, 1, 1, 2, 2, 2]))
    assert len(r.classes) == 4


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 5), n=st.integers(1, 40))
def test_match_is_optimal_and_invariant(seed, K, n):
    rng = np.random.default_rng(seed)
    truth = rng.integers(1, K + 1, size=n)
    pred = rng.integers(1, K + 2, size=n)
    r = match_labels(pred, truth)
    assert r.accuracy == pytest.approx(brute_force_accuracy(pred.tolist(), truth.tolist()))
    assert r.accuracy >= r.identity_accuracy
    assert r.confusion.sum() == n
    relabel_p = rng.permutation(np.arange(1, K + 2)) * 3
    relabel_t = rng.permutation(np.arange(1, K + 1)) + 10
    assert match_labels(relabel_p[pred - 1], truth).accuracy == pytest.approx(r.accuracy)
    assert match_labels(pred, relabel_t[truth - 1]).accuracy == pytest.approx(r.accuracy)


def test_exhaustive_and_assignment_agree(rng):
    for _ in range(200):
        K = int(rng.integers(1, 9))
        n = int(rng.integers(1, 200))
        truth = rng.integers(1, K + 1, size=n)
        pred = rng.integers(1, K + 1, size=n)
        C, _, _ = contingency(truth, pred)
        m = C.shape[0]
        a = C[best_assignment(C, exhaustive=True), np.arange(m)].sum()
        b = C[best_assignment(C, exhaustive=False), np.arange(m)].sum()
        assert a == b
        assert match_labels(pred, truth, exhaustive=True).accuracy == match_labels(pred, truth, exhaustive=False).accuracy


def test_large_alphabet_uses_assignment(rng):
    truth = np.repeat(np.arange(1, 13), 10)
    perm = rng.permutation(12) + 1
    r = match_labels(perm[truth - 1], truth)
    assert r.accuracy == 1.0


def test_fp_fn_identity():
    r = fp_fn_rates(np.diag([4, 5, 6]))
    assert np.all(r.fp == 0) and np.all(r.fn == 0)


def test_fp_fn_two_by_two():
    r = fp_fn_rates([[9, 1], [3, 7]])
    np.testing.assert_allclose(r.fn, [10.0, 30.0])
    np.testing.assert_allclose(r.fp, [25.0, 12.5])


def test_fp_fn_absent_class_flagged():
    r = fp_fn_rates([[5, 0], [0, 0]])
    assert r.fn[1] == 0.0 and r.fn_undefined[1] and not r.fn_undefined[0]
    assert r.fp_undefined[1]


def test_pooled_accuracy():
    a = match_labels([1, 1, 2, 2], [1, 1, 2, 1])
    b = match_labels([1, 2], [1, 2])
    assert pooled_accuracy([a, b]) == pytest.approx((3 + 2) / 6)


def test_runs_and_contiguity():
    assert runs([1, 1, 2, 2, 2, 3]) == [(1, 0, 2), (2, 2, 5), (3, 5, 6)]
    assert is_contiguous([1, 1, 2, 3], K=3)
    assert not is_contiguous([1, 2, 1])
    assert not is_contiguous([1, 2, 3], K=2)
