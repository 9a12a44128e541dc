"""Sampling from the generative model, plus brute-force reference computations.

``naive_loglik`` and ``finite_diff_grad`` deliberately avoid the code paths
they are used to check (no log-space tricks, no Cholesky, no analytic
derivatives).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Hyperparams, MrhlpModel, RegimeParams, TimeSeries
from .em import floor_covariance
from .exceptions import DataError

DEFAULT_COV_FLOOR = 1e-6


@dataclass(frozen=True)
class SimulationSpec:
    model: MrhlpModel
    n: int
    t_start: float = 0.0
    t_end: float = 1.0
    seed: int = 0
    cov_floor: float = DEFAULT_COV_FLOOR

    def __post_init__(self):
        if self.n < 1:
            raise DataError("n must be >= 1")
        if not self.t_end > self.t_start:
            raise DataError("t_end must exceed t_start")


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Generator for sample ``index``: Philox keyed by ``seed``, counter word 1 set to ``index``.

    Each sample owns a disjoint counter block, so samples can be drawn in any
    order or in parallel and give the same values.
    """
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, index, 0, 0]))


def simulate(spec: SimulationSpec):
    """Draw a labelled series from ``spec.model`` on a uniform time grid.

    Returns the series and the 1-based true labels.
    """
    model = spec.model
    n, d, K = spec.n, model.d, model.K
    t = np.linspace(spec.t_start, spec.t_end, n)
    t0, t1 = model.time_range if model.time_range is not None else (spec.t_start, spec.t_end)
    s = (t - t0) / (t1 - t0)

    V = np.vander(s, model.hyper.u + 1, increasing=True)
    logits = V @ model.weights.T
    logits -= logits.max(axis=1, keepdims=True)
    pi = np.exp(logits)
    pi /= pi.sum(axis=1, keepdims=True)
    cdf = np.cumsum(pi, axis=1)

    chol = [np.linalg.cholesky(floor_covariance(r.Sigma, spec.cov_floor)) for r in model.regimes]
    means = [np.vander(s, r.degree + 1, increasing=True) @ r.B for r in model.regimes]

    labels = np.empty(n, dtype=np.int64)
    Y = np.empty((n, d))
    for i in range(n):
        g = sample_stream(spec.seed, i)
        k = min(int(np.searchsorted(cdf[i], g.random() * cdf[i, -1], side="right")), K - 1)
        labels[i] = k + 1
        Y[i] = means[k][i] + chol[k] @ g.standard_normal(d)
    return TimeSeries(t, Y), labels


def contiguous_weights(boundaries, steepness: float) -> np.ndarray:
    """Linear logistic weights giving regimes 1..K in order, switching at ``boundaries``.

    ``boundaries`` are K-1 increasing points on the rescaled [0, 1] time axis;
    ``steepness`` is the logit slope difference between neighbouring regimes.
    """
    b = np.asarray(boundaries, dtype=float)
    K = b.size + 1
    W = np.zeros((K, 2))
    for k in range(K):
        W[k] = (-steepness * b[:k].sum(), steepness * k)
    return W - W[-1]


def separated_regimes_spec(seed: int, n: int = 900, K: int = 3, d: int = 3,
                           separation: float = 10.0, t_end: float = 90.0) -> SimulationSpec:
    """Constant-mean regimes in contiguous blocks with well separated means.

    Pairwise mean distances are at least ``separation`` times the square root
    of the largest covariance eigenvalue over all regimes. Covariances,
    means and switch points are drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    covs = []
    for _ in range(K):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        covs.append((Q * rng.uniform(0.3, 1.5, size=d)) @ Q.T)
        covs[-1] = 0.5 * (covs[-1] + covs[-1].T)
    scale = math.sqrt(max(np.linalg.eigvalsh(c)[-1] for c in covs))
    gap = 1.2 * separation * scale
    means = []
    while len(means) < K:
        cand = rng.uniform(-gap * K, gap * K, size=d) / 2
        if all(np.linalg.norm(cand - m) >= gap for m in means):
            means.append(cand)
    while True:
        cuts = np.sort(rng.uniform(0.1, 0.9, size=K - 1))
        if K == 1 or np.min(np.diff(np.concatenate(([0.0], cuts, [1.0])))) >= 0.12:
            break
    W = contiguous_weights(cuts, steepness=20.0 * n)
    regimes = [RegimeParams(m[None, :], c) for m, c in zip(means, covs)]
    model = MrhlpModel(Hyperparams(K, 0, 1), W, regimes)
    return SimulationSpec(model, n, 0.0, t_end, seed)


def naive_loglik(series: TimeSeries, model: MrhlpModel) -> float:
    """Observed-data log-likelihood by direct density evaluation and plain sums."""
    t, Y = series.t, series.Y
    t0, t1 = model.time_range if model.time_range is not None else (t[0], t[-1])
    span = t1 - t0
    d = Y.shape[1]
    inverses = [np.linalg.inv(r.Sigma) for r in model.regimes]
    norms = [1.0 / math.sqrt((2 * math.pi) ** d * np.linalg.det(r.Sigma)) for r in model.regimes]
    total = 0.0
    for i in range(len(t)):
        s = (t[i] - t0) / span if span > 0 else 0.0
        v = [s ** a for a in range(model.hyper.u + 1)]
        expo = [math.exp(sum(wk[a] * v[a] for a in range(len(v)))) for wk in model.weights]
        denom = sum(expo)
        mix = 0.0
        for k, reg in enumerate(model.regimes):
            x = [s ** a for a in range(reg.B.shape[0])]
            mean = [sum(reg.B[a, j] * x[a] for a in range(len(x))) for j in range(d)]
            r = [Y[i, j] - mean[j] for j in range(d)]
            quad = sum(r[a] * inverses[k][a, b] * r[b] for a in range(d) for b in range(d))
            mix += expo[k] / denom * norms[k] * math.exp(-0.5 * quad)
        total += math.log(mix)
    return total


def finite_diff_grad(objective, W, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``objective(W)`` over the free rows of ``W`` (all but the last)."""
    if not h > 0:
        raise ValueError("step must be positive")
    W = np.array(W, dtype=float)
    grad = np.zeros_like(W[:-1])
    for idx in np.ndindex(grad.shape):
        up, down = W.copy(), W.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (objective(up) - objective(down)) / (2 * h)
    return grad
