import numpy as np
import pytest

from mrhlp.core import Hyperparams, MrhlpModel, RegimeParams, TimeSeries

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_spd(rng, d, lo=0.3, hi=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    S = (Q * rng.uniform(lo, hi, size=d)) @ Q.T
    return 0.5 * (S + S.T)


def random_model(rng, K, d, p=0, u=1, wscale=3.0, bscale=3.0):
    degrees = (p,) * K if np.isscalar(p) else tuple(p)
    W = rng.normal(scale=wscale, size=(K, u + 1))
    W[-1] = 0.0
    regimes = [RegimeParams(rng.normal(scale=bscale, size=(pk + 1, d)), random_spd(rng, d)) for pk in degrees]
    return MrhlpModel(Hyperparams(K, degrees, u), W, regimes)


def random_series(rng, n, d, t_scale=10.0):
    t = np.cumsum(rng.uniform(0.1, 1.0, size=n)) * t_scale / n
    return TimeSeries(t, rng.normal(scale=2.0, size=(n, d)))


def assert_monotone(report):
    h = np.asarray(report.loglik_history)
    exempt = set(report.rescue_iterations)
    for q in range(len(h) - 1):
        if q + 1 in exempt:
            continue
        assert h[q + 1] >= h[q] - 1e-8 * (1 + abs(h[q])), (q, h[q], h[q + 1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
