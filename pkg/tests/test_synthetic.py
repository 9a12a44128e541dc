import numpy as np
import pytest

from mrhlp.core import Hyperparams, MrhlpModel, RegimeParams, TimeSeries, poly_design, rescale_time
from mrhlp.em import log_likelihood
from mrhlp.logistic import build_covariates, priors
from mrhlp.segmentation import is_contiguous
from mrhlp.synthetic import (
    SimulationSpec,
    contiguous_weights,
    finite_diff_grad,
    naive_loglik,
    sample_stream,
    separated_regimes_spec,
    simulate,
)

from conftest import random_model, random_series


def test_noiseless_limit():
    B = np.array([[1.0, -2.0], [0.5, 3.0], [2.0, 0.0]])
    floor = 1e-6
    model = MrhlpModel(Hyperparams(1, 2, 1), np.zeros((1, 2)), [RegimeParams(B, floor * np.eye(2))])
    series, labels = simulate(SimulationSpec(model, 200, 0.0, 5.0, seed=1))
    mean = poly_design(rescale_time(series.t), 2) @ B
    assert np.all(np.abs(series.Y - mean) <= 5 * np.sqrt(floor))
    assert np.all(labels == 1)


def test_degenerate_priors_give_two_blocks():
    model = MrhlpModel(Hyperparams(2, 0, 1), contiguous_weights([0.5], 1e4),
                       [RegimeParams([[0.0]], [[1.0]]), RegimeParams([[5.0]], [[1.0]])])
    _, labels = simulate(SimulationSpec(model, 101, 0.0, 1.0, seed=3))
    assert is_contiguous(labels, 2)
    assert labels[0] == 1 and labels[-1] == 2


def test_label_frequencies_match_prior_mass(rng):
    W = np.array([[1.0, -3.0], [-1.0, 2.5], [0.0, 0.0]])
    model = MrhlpModel(Hyperparams(3, 0, 1), W, [RegimeParams(np.zeros((1, 3)), np.eye(3))] * 3)
    series, labels = simulate(SimulationSpec(model, 900, 0.0, 30.0, seed=7))
    pi = priors(build_covariates(series.t, 1), W)
    expected = pi.sum(axis=0)
    sd = np.sqrt((pi * (1 - pi)).sum(axis=0))
    counts = np.array([(labels == k + 1).sum() for k in range(3)])
    assert np.all(np.abs(counts - expected) <= 3 * sd)


def test_simulation_is_reproducible():
    spec = separated_regimes_spec(9, n=150)
    (s1, l1), (s2, l2) = simulate(spec), simulate(spec)
    assert np.array_equal(s1.Y, s2.Y) and np.array_equal(l1, l2)
    s3, _ = simulate(SimulationSpec(spec.model, 150, 0.0, 90.0, seed=10))
    assert not np.array_equal(s1.Y, s3.Y)


def test_streams_are_per_sample():
    a = sample_stream(5, 17).random(4)
    sample_stream(5, 3).random(100)
    assert np.array_equal(a, sample_stream(5, 17).random(4))
    assert not np.array_equal(a, sample_stream(5, 18).random(4))


def test_residual_covariance_matches(rng):
    S = np.array([[2.0, 0.6, -0.3], [0.6, 1.0, 0.2], [-0.3, 0.2, 0.5]])
    B = np.array([[1.0, 2.0, 3.0]])
    model = MrhlpModel(Hyperparams(1, 0, 1), np.zeros((1, 2)), [RegimeParams(B, S)])
    series, _ = simulate(SimulationSpec(model, 100_000, 0.0, 1.0, seed=12))
    R = series.Y - B
    emp = R.T @ R / len(R)
    assert np.linalg.norm(emp - S) / np.linalg.norm(S) < 0.05


def test_separated_spec_meets_separation():
    for seed in range(10):
        spec = separated_regimes_spec(seed)
        lam = max(np.linalg.eigvalsh(r.Sigma)[-1] for r in spec.model.regimes)
        means = [r.B[0] for r in spec.model.regimes]
        for i in range(3):
            for j in range(i):
                assert np.linalg.norm(means[i] - means[j]) >= 10 * np.sqrt(lam)
        _, labels = simulate(spec)
        assert is_contiguous(labels, 3) and len(set(labels)) == 3


def test_contiguous_weights_order():
    W = contiguous_weights([0.2, 0.7], 50.0)
    s = np.linspace(0, 1, 101)
    lab = np.argmax(priors(np.c_[np.ones_like(s), s], W), axis=1)
    assert lab[10] == 0 and lab[50] == 1 and lab[90] == 2
    assert np.all(W[-1] == 0)


def test_naive_loglik_examples(rng):
    s = TimeSeries([0.0, 1.0], np.zeros((2, 1)))
    m = MrhlpModel(Hyperparams(1, 0, 1), np.zeros((1, 2)), [RegimeParams([[0.0]], [[1.0]])])
    assert naive_loglik(s, m) == pytest.approx(-1.8378770664093453, rel=1e-15)
    m3 = MrhlpModel(Hyperparams(3, 0, 1), rng.normal(size=(3, 2)) * [[1], [1], [0]], [m.regimes[0]] * 3)
    assert naive_loglik(s, m3) == pytest.approx(naive_loglik(s, m), rel=1e-14)


def test_naive_loglik_agrees_with_fast_path(rng):
    for _ in range(20):
        K, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        m = random_model(rng, K, d, p=1, u=2)
        s = random_series(rng, 30, d)
        assert naive_loglik(s, m) == pytest.approx(log_likelihood(s, m), rel=1e-10)


def test_finite_diff_on_quadratic():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])

    def f(W):
        w = W[:-1].ravel()
        return float(w @ A @ w + 3 * w.sum())

    W = np.array([[0.5, -1.0], [0.0, 0.0]])
    expected = (2 * A @ W[0] + 3).reshape(1, 2)
    np.testing.assert_allclose(finite_diff_grad(f, W, 1e-3), expected, rtol=1e-9)
    with pytest.raises(ValueError):
        finite_diff_grad(f, W, 0.0)
