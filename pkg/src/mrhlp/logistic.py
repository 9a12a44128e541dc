"""Time-dependent logistic priors and the weighted multinomial IRLS solver.

The prior of regime ``k`` at time ``t_i`` is the softmax over ``k`` of
``W[k] @ v_i`` with ``v_i = (1, s_i, ..., s_i**u)`` and ``s_i`` the time
rescaled onto [0, 1]. The last row of ``W`` is the reference class and is
kept at zero, so only the first ``K - 1`` rows are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .core import poly_design, rescale_time
from .exceptions import DimensionMismatch, SingularHessian


def build_covariates(t, u: int, time_range=None) -> np.ndarray:
    """Covariate matrix V (n x (u+1)) over time rescaled onto [0, 1]."""
    if u < 0:
        raise ValueError("u must be >= 0")
    return poly_design(rescale_time(t, time_range), u)


def _check(V, W):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if V.shape[1] != W.shape[1]:
        raise DimensionMismatch(
            f"covariates have {V.shape[1]} columns but weights have {W.shape[1]}"
        )
    return V, W


def log_priors(V, W) -> np.ndarray:
    V, W = _check(V, W)
    logits = V @ W.T
    return logits - logsumexp(logits, axis=1, keepdims=True)


def priors(V, W) -> np.ndarray:
    """n x K matrix of prior probabilities, one softmax per row."""
    V, W = _check(V, W)
    logits = V @ W.T
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


def qw_objective(V, tau, W, ridge: float = 0.0) -> float:
    """``sum_ik tau_ik log pi_ik(W) - ridge/2 * ||W_free||^2``."""
    tau = np.asarray(tau, dtype=float)
    lp = log_priors(V, W)
    # 0 * log(0) contributes nothing
    value = float(np.sum(np.where(tau > 0, tau * lp, 0.0)))
    if ridge:
        value -= 0.5 * ridge * float(np.sum(np.asarray(W)[:-1] ** 2))
    return value


def qw_gradient(V, tau, W, ridge: float = 0.0) -> np.ndarray:
    """Gradient of :func:`qw_objective` with respect to the free rows, shape (K-1, u+1)."""
    V, W = _check(V, W)
    tau = np.asarray(tau, dtype=float)
    pi = priors(V, W)
    mass = tau.sum(axis=1)
    resid = tau - pi * mass[:, None]
    grad = resid[:, :-1].T @ V
    if ridge:
        grad -= ridge * W[:-1]
    return grad


def qw_hessian(V, tau, W, ridge: float = 0.0) -> np.ndarray:
    """Hessian over the flattened free block, shape ((K-1)(u+1), (K-1)(u+1))."""
    V, W = _check(V, W)
    tau = np.asarray(tau, dtype=float)
    K, q = W.shape
    pi = priors(V, W)[:, :-1]
    mass = tau.sum(axis=1)
    a = pi * mass[:, None]
    VV = V[:, :, None] * V[:, None, :]
    diag = np.tensordot(a, VV, axes=(0, 0))
    cross = np.tensordot(a[:, :, None] * pi[:, None, :], VV, axes=(0, 0))
    H = cross.transpose(0, 2, 1, 3).copy()
    for k in range(K - 1):
        H[k, :, k, :] -= diag[k]
    H = H.reshape((K - 1) * q, (K - 1) * q)
    if ridge:
        H -= ridge * np.eye(H.shape[0])
    return H


@dataclass(frozen=True)
class IrlsOptions:
    max_iter: int = 50
    grad_tol: float = 1e-6
    ridge: float = 1e-6
    step_halvings: int = 20

    def __post_init__(self):
        if self.max_iter < 1 or self.grad_tol <= 0 or self.ridge <= 0 or self.step_halvings < 1:
            raise ValueError("IRLS options must all be positive")


@dataclass
class IrlsResult:
    weights: np.ndarray
    qw: float
    iterations: int
    converged: bool
    trajectory: list = field(default_factory=list)


def _newton_direction(H, g):
    neg = -H
    boost = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(neg)))))
    for _ in range(6):
        try:
            factor = linalg.cho_factor(neg + boost * np.eye(neg.shape[0]), check_finite=True)
            step = linalg.cho_solve(factor, g)
        except (linalg.LinAlgError, ValueError):
            step = None
        if step is not None and np.all(np.isfinite(step)):
            return step
        boost = scale * 1e-10 if boost == 0.0 else boost * 1e3
    raise SingularHessian("IRLS Hessian is singular even after ridge boosting")


def irls_fit(V, tau, W0=None, opts: IrlsOptions | None = None) -> IrlsResult:
    """Maximize the weighted multinomial log-likelihood ``Q_w`` by Newton-Raphson.

    Each Newton step is halved until the ridge-penalized objective increases;
    if no halving helps the current point is returned as converged. The
    returned weights never have a lower (unpenalized) ``Q_w`` than ``W0``.

    Parameters
    ----------
    V : ndarray, shape (n, u+1)
        Covariates from :func:`build_covariates`.
    tau : ndarray, shape (n, K)
        Responsibilities acting as soft class targets.
    W0 : ndarray, shape (K, u+1), optional
        Starting point; zero when omitted. A non-zero last row is
        subtracted from every row, which leaves the priors unchanged.
    opts : IrlsOptions, optional
    """
    opts = opts or IrlsOptions()
    V = np.atleast_2d(np.asarray(V, dtype=float))
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    if V.shape[0] != tau.shape[0]:
        raise DimensionMismatch(f"V has {V.shape[0]} rows but tau has {tau.shape[0]}")
    K, q = tau.shape[1], V.shape[1]
    if W0 is None:
        W0 = np.zeros((K, q))
    W0 = np.array(W0, dtype=float)
    _check(V, W0)
    if W0.shape[0] != K:
        raise DimensionMismatch(f"W0 has {W0.shape[0]} rows but tau has {K} columns")
    W0 = W0 - W0[-1]

    if K == 1:
        return IrlsResult(W0, 0.0, 0, True, [0.0])

    W = W0.copy()
    obj = qw_objective(V, tau, W, opts.ridge)
    trajectory = [obj]
    converged = False
    for _ in range(opts.max_iter):
        g = qw_gradient(V, tau, W, opts.ridge)
        if np.max(np.abs(g)) <= opts.grad_tol:
            converged = True
            break
        H = qw_hessian(V, tau, W, opts.ridge)
        step = _newton_direction(H, g.ravel()).reshape(K - 1, q)
        alpha = 1.0
        accepted = False
        for _ in range(opts.step_halvings + 1):
            cand = W.copy()
            cand[:-1] += alpha * step
            cand_obj = qw_objective(V, tau, cand, opts.ridge)
            if np.isfinite(cand_obj) and cand_obj > obj:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True
            break
        W, obj = cand, cand_obj
        trajectory.append(obj)
    else:
        g = qw_gradient(V, tau, W, opts.ridge)
        converged = bool(np.max(np.abs(g)) <= opts.grad_tol)

    qw = qw_objective(V, tau, W)
    q0 = qw_objective(V, tau, W0)
    if qw < q0:
        # the ridge can trade a little Q_w for a smaller norm; never go backwards
        W, qw = W0, q0
    return IrlsResult(W, qw, len(trajectory) - 1, converged, trajectory)
