"""EM estimation of the MRHLP model.

One EM iteration computes responsibilities (E-step), refits each regime by
weighted least squares and a weighted covariance, then refits the logistic
weights by IRLS warm-started from the previous weights.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .core import (
    FitReport,
    Hyperparams,
    MrhlpModel,
    RegimeParams,
    TimeSeries,
    bic,
    poly_design,
    rescale_time,
    validate_series,
)
from .exceptions import (
    AllRestartsFailed,
    DimensionMismatch,
    NonPdCovariance,
    NumericalError,
    RankDeficientDesign,
)
from .logistic import IrlsOptions, build_covariates, irls_fit, log_priors

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
INIT_STRATEGIES = ("contiguous-random", "kmeans-on-time-windows")
EMPTY_FRACTION = 1e-8
MAX_RESCUES = 20


@dataclass(frozen=True)
class EmOptions:
    max_iter: int = 300
    tol: float = 1e-6
    restarts: int = 5
    seed: int = 0
    cov_floor: float = 1e-6
    init: str = "contiguous-random"
    irls: IrlsOptions = field(default_factory=IrlsOptions)

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.cov_floor > 0:
            raise ValueError("cov_floor must be > 0")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init!r}")


def design_matrices(t_scaled, degrees) -> list:
    """One regression matrix per regime; regimes sharing a degree share the array."""
    cache = {}
    out = []
    for p in degrees:
        if p not in cache:
            X = poly_design(t_scaled, p)
            X.setflags(write=False)
            cache[p] = X
        out.append(cache[p])
    return out


def _time_range(series, model):
    return model.time_range if model.time_range is not None else (series.t[0], series.t[-1])


def _check_dims(series: TimeSeries, model: MrhlpModel):
    if series.d != model.d:
        raise DimensionMismatch(f"series has d={series.d} channels but model has d={model.d}")


def gaussian_logpdf(resid: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """Row-wise log N(r; 0, Sigma) for residuals ``r`` (n x d)."""
    try:
        L = linalg.cholesky(Sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise NonPdCovariance("covariance matrix is not positive definite") from exc
    z = linalg.solve_triangular(L, resid.T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (resid.shape[1] * LOG_2PI + logdet + np.sum(z * z, axis=0))


def joint_log_densities(series: TimeSeries, model: MrhlpModel) -> np.ndarray:
    """n x K matrix of ``log pi_k(t_i) + log N(y_i; B_k^T x_i, Sigma_k)``."""
    _check_dims(series, model)
    s = rescale_time(series.t, _time_range(series, model))
    V = poly_design(s, model.hyper.u)
    Xs = design_matrices(s, model.hyper.degrees)
    out = log_priors(V, model.weights)
    for k, (X, reg) in enumerate(zip(Xs, model.regimes)):
        out[:, k] += gaussian_logpdf(series.Y - X @ reg.B, reg.Sigma)
    return out


def log_likelihood(series: TimeSeries, model: MrhlpModel) -> float:
    """Observed-data log-likelihood, summed over samples with log-sum-exp over regimes."""
    validate_series(series)
    return float(np.sum(logsumexp(joint_log_densities(series, model), axis=1)))


def _posterior(joint):
    row = logsumexp(joint, axis=1, keepdims=True)
    tau = np.exp(joint - row)
    tau /= tau.sum(axis=1, keepdims=True)
    return tau, row[:, 0]


def e_step(series: TimeSeries, model: MrhlpModel):
    """Responsibilities ``tau`` (n x K) and the log-likelihood from the same pass."""
    tau, per_sample = _posterior(joint_log_densities(series, model))
    return tau, float(np.sum(per_sample))


def _weighted_lstsq(X, Y, w, ridge):
    # QR of the sqrt-weighted design: same solution as the normal equations
    # without squaring the condition number (narrow, heavily weighted windows
    # make X^T W X nearly singular long before the problem itself is).
    sw = np.sqrt(w)
    Q, R = linalg.qr(X * sw[:, None], mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() > diag.max() * X.shape[0] * np.finfo(float).eps:
        B = linalg.solve_triangular(R, Q.T @ (Y * sw[:, None]))
        if np.all(np.isfinite(B)):
            return B
    Xw = X * w[:, None]
    gram = X.T @ Xw + ridge * np.eye(X.shape[1])
    try:
        B = linalg.cho_solve(linalg.cho_factor(gram), Xw.T @ Y)
    except (linalg.LinAlgError, ValueError):
        B = None
    if B is not None and np.all(np.isfinite(B)) and np.abs(np.diag(gram)).max() > 0:
        return B
    raise RankDeficientDesign(
        f"weighted normal equations are singular (total weight {w.sum():.3g})"
    )


def m_step_regression(series: TimeSeries, X: np.ndarray, tau_col, cov_floor: float = 1e-6) -> np.ndarray:
    """Weighted least-squares coefficients ``(X^T W X)^-1 X^T W Y``.

    Solved by QR of ``sqrt(W) X``. If that is numerically rank deficient the
    Gram matrix plus a ridge of ``cov_floor * I`` is factored by Cholesky instead.
    """
    w = np.asarray(tau_col, dtype=float)
    if w.sum() <= 0:
        raise RankDeficientDesign("regime has zero total weight")
    return _weighted_lstsq(np.asarray(X, dtype=float), series.Y, w, cov_floor)


def floor_covariance(S: np.ndarray, cov_floor: float) -> np.ndarray:
    """Symmetrize ``S`` and raise every eigenvalue below ``cov_floor`` to it."""
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    if vals[0] >= cov_floor:
        return S
    S = (vecs * np.maximum(vals, cov_floor)) @ vecs.T
    S = 0.5 * (S + S.T)
    short = cov_floor - np.linalg.eigvalsh(S)[0]
    if short > 0:
        S = S + short * np.eye(S.shape[0])
    return S


def m_step_covariance(series: TimeSeries, X, B, tau_col, cov_floor: float = 1e-6) -> np.ndarray:
    w = np.asarray(tau_col, dtype=float)
    total = w.sum()
    if total <= 0:
        raise RankDeficientDesign("regime has zero total weight")
    R = series.Y - np.asarray(X) @ np.asarray(B)
    S = (R * w[:, None]).T @ R / total
    return floor_covariance(S, cov_floor)


# -- initialization ---------------------------------------------------------


def _fit_from_masks(series, Xs, masks, cov_floor):
    regimes = []
    for X, mask in zip(Xs, masks):
        w = mask.astype(float)
        B = m_step_regression(series, X, w, cov_floor)
        regimes.append(RegimeParams(B, m_step_covariance(series, X, B, w, cov_floor)))
    return regimes


def _contiguous_masks(n, K, min_len, rng):
    if n < K * min_len:
        min_len = max(1, n // K)
    slack = n - K * min_len
    extra = np.diff(np.concatenate(([0], np.sort(rng.integers(0, slack + 1, size=K - 1)), [slack])))
    bounds = np.concatenate(([0], np.cumsum(min_len + extra)))
    masks = []
    for k in range(K):
        m = np.zeros(n, dtype=bool)
        m[bounds[k]:bounds[k + 1]] = True
        masks.append(m)
    return masks


def _kmeans(X, K, rng, iters=50):
    centers = [X[rng.integers(len(X))]]
    for _ in range(1, K):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.choice(len(X), p=d2 / total) if total > 0 else rng.integers(len(X))
        centers.append(X[idx])
    centers = np.array(centers)
    labels = np.zeros(len(X), dtype=int)
    for _ in range(iters):
        labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        new = np.array([X[labels == k].mean(0) if np.any(labels == k) else centers[k] for k in range(K)])
        if np.allclose(new, centers):
            break
        centers = new
    return labels


def _window_masks(series, K, min_len, rng):
    n = series.n
    width = max(min_len, n // (4 * K))
    n_win = n // width
    if n_win < K:
        return None
    edges = np.linspace(0, n, n_win + 1).astype(int)
    feats = np.array([series.Y[a:b].mean(0) for a, b in zip(edges[:-1], edges[1:])])
    scale = feats.std(0)
    feats = feats / np.where(scale > 0, scale, 1.0)
    labels = _kmeans(feats, K, rng)
    masks = []
    for k in range(K):
        m = np.zeros(n, dtype=bool)
        for j in np.flatnonzero(labels == k):
            m[edges[j]:edges[j + 1]] = True
        if m.sum() < min_len:
            return None
        masks.append(m)
    return masks


def initial_model(series, hyper, opts, rng, Xs=None) -> MrhlpModel:
    """Starting parameters: per-block fits with uniform logistic priors."""
    s = rescale_time(series.t)
    Xs = Xs or design_matrices(s, hyper.degrees)
    min_len = hyper.max_degree + 2
    masks = None
    if opts.init == "kmeans-on-time-windows":
        masks = _window_masks(series, hyper.K, min_len, rng)
    if masks is None:
        masks = _contiguous_masks(series.n, hyper.K, min_len, rng)
    regimes = _fit_from_masks(series, Xs, masks, opts.cov_floor)
    W = np.zeros((hyper.K, hyper.u + 1))
    return MrhlpModel(hyper, W, regimes, (series.t[0], series.t[-1]))


# -- EM loop ----------------------------------------------------------------


@dataclass
class _Run:
    model: MrhlpModel
    tau: np.ndarray
    history: list
    converged: bool
    iterations: int
    rescues: list


def _rescue(series, model, joint, k, Xs, cov_floor):
    """Re-seed regime ``k`` on the worst-explained contiguous block of samples."""
    n = series.n
    per_sample = logsumexp(joint, axis=1)
    width = min(n, max(model.hyper.degrees[k] + 2, n // (2 * model.K)))
    window = np.convolve(per_sample, np.ones(width), mode="valid")
    start = int(np.argmin(window))
    mask = np.zeros(n, dtype=bool)
    mask[start:start + width] = True
    reg = _fit_from_masks(series, [Xs[k]], [mask], cov_floor)[0]
    regimes = list(model.regimes)
    regimes[k] = reg
    W = np.zeros_like(model.weights)
    return MrhlpModel(model.hyper, W, regimes, model.time_range)


def run_em(series: TimeSeries, model: MrhlpModel, opts: EmOptions) -> _Run:
    """Iterate EM from ``model`` until the relative log-likelihood gain drops below ``opts.tol``."""
    hyper = model.hyper
    s = rescale_time(series.t, _time_range(series, model))
    V = poly_design(s, hyper.u)
    Xs = design_matrices(s, hyper.degrees)
    floor_mass = EMPTY_FRACTION * series.n

    def expect(m):
        joint = joint_log_densities(series, m)
        tau, per_sample = _posterior(joint)
        return joint, tau, float(np.sum(per_sample))

    rescues = []

    def rescue_loop(m, joint, tau, L, it):
        while True:
            empty = np.flatnonzero(tau.sum(axis=0) < floor_mass)
            if empty.size == 0:
                return m, tau, L
            if len(rescues) >= MAX_RESCUES:
                raise NumericalError("regimes keep collapsing; giving up on this restart")
            rescues.append(it)
            logger.debug("iteration %d: re-seeding empty regime %d", it, empty[0] + 1)
            m = _rescue(series, m, joint, int(empty[0]), Xs, opts.cov_floor)
            joint, tau, L = expect(m)

    joint, tau, L = expect(model)
    model, tau, L = rescue_loop(model, joint, tau, L, 0)
    history = [L]
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        regimes = []
        for k in range(hyper.K):
            w = tau[:, k]
            B = m_step_regression(series, Xs[k], w, opts.cov_floor)
            regimes.append(RegimeParams(B, m_step_covariance(series, Xs[k], B, w, opts.cov_floor)))
        W = irls_fit(V, tau, model.weights, opts.irls).weights
        model = MrhlpModel(hyper, W, regimes, model.time_range)

        joint, tau, L_new = expect(model)
        n_rescued = len(rescues)
        model, tau, L_new = rescue_loop(model, joint, tau, L_new, it)
        if not np.isfinite(L_new):
            raise NumericalError(f"log-likelihood became non-finite at iteration {it}")
        rescued = len(rescues) > n_rescued
        gain = (L_new - L) / (1.0 + abs(L))
        history.append(L_new)
        L = L_new
        if not rescued and gain < opts.tol:
            converged = True
            break
    return _Run(model, tau, history, converged, it, sorted(set(rescues)))


def _single_restart(series, hyper, opts, r):
    rng = np.random.default_rng(opts.seed + r)
    try:
        model0 = initial_model(series, hyper, opts, rng)
        return run_em(series, model0, opts), None
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return None, exc


def fit(series: TimeSeries, hyper: Hyperparams, opts: EmOptions | None = None, threads: int = 1):
    """Fit the model by EM with several random restarts.

    Restart ``r`` is seeded with ``opts.seed + r`` so results do not depend on
    ``threads``. The restart with the highest final log-likelihood wins
    (lowest index on ties).

    Returns
    -------
    model : MrhlpModel
    tau : ndarray, shape (n, K)
        Responsibilities under the returned model.
    report : FitReport
    """
    opts = opts or EmOptions()
    validate_series(series)
    hyper.check_sample_size(series.n)
    if series.n < hyper.K * (hyper.max_degree + 1):
        warnings.warn(
            f"n={series.n} is small for K={hyper.K} regimes of degree {hyper.max_degree}",
            stacklevel=2,
        )

    indices = range(opts.restarts)
    if threads > 1 and opts.restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda r: _single_restart(series, hyper, opts, r), indices))
    else:
        outcomes = [_single_restart(series, hyper, opts, r) for r in indices]

    failures = [(r, exc) for r, (run, exc) in enumerate(outcomes) if run is None]
    if len(failures) == opts.restarts:
        raise AllRestartsFailed(failures)
    best = None
    for r, (run, _) in enumerate(outcomes):
        if run is not None and (best is None or run.history[-1] > outcomes[best][0].history[-1]):
            best = r
    run = outcomes[best][0]
    L = run.history[-1]
    report = FitReport(
        loglik_history=tuple(run.history),
        converged=run.converged,
        iterations=run.iterations,
        bic=bic(L, hyper, series.d, series.n),
        restart_index=best,
        seed=opts.seed,
        rescue_iterations=tuple(run.rescues),
        restart_logliks=tuple(None if o[0] is None else o[0].history[-1] for o in outcomes),
        failed_restarts=tuple((r, str(e)) for r, e in failures),
    )
    return run.model, run.tau, report
