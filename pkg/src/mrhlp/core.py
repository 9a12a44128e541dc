"""Domain types shared by the estimation, segmentation and I/O modules.

All containers are frozen dataclasses holding read-only numpy arrays, so a
fitted model or a series can be handed to several threads without copying.
Regime indices are 1-based wherever they leave the package (labels, files);
inside numpy arrays regime ``k`` lives in column ``k - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    DataError,
    DimensionMismatch,
    EmptySeries,
    NonFiniteValue,
    NonIncreasingTime,
)

ROW_SUM_TOL = 1e-12


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """``n`` observations ``Y`` (n x d) sampled at strictly increasing times ``t``."""

    t: np.ndarray
    Y: np.ndarray
    channels: Optional[tuple] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "Y", _frozen(Y))
        if self.channels is None:
            object.__setattr__(
                self, "channels", tuple(f"y{j + 1}" for j in range(Y.shape[1] if Y.ndim == 2 else 0))
            )
        else:
            object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def d(self) -> int:
        return self.Y.shape[1]

    def scaled(self, factor: float) -> "TimeSeries":
        return TimeSeries(self.t, self.Y * factor, self.channels)


def validate_series(series: TimeSeries) -> TimeSeries:
    """Check the series invariants and return it unchanged.

    Raises
    ------
    EmptySeries
        ``n == 0`` or ``d == 0``.
    NonIncreasingTime
        ``t[i] <= t[i-1]``; ``index`` is the 0-based position of ``t[i]``.
    NonFiniteValue
        NaN or inf in ``Y`` (or in ``t``, reported with column -1).
    """
    t, Y = series.t, series.Y
    if t.ndim != 1 or t.shape[0] == 0:
        raise EmptySeries()
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise EmptySeries("series has no data channels")
    if Y.shape[0] != t.shape[0]:
        raise DimensionMismatch(f"t has {t.shape[0]} entries but Y has {Y.shape[0]} rows")
    bad_t = np.flatnonzero(~np.isfinite(t))
    if bad_t.size:
        raise NonFiniteValue(int(bad_t[0]), -1)
    bad = np.argwhere(~np.isfinite(Y))
    if bad.size:
        raise NonFiniteValue(int(bad[0, 0]), int(bad[0, 1]))
    steps = np.flatnonzero(np.diff(t) <= 0)
    if steps.size:
        raise NonIncreasingTime(int(steps[0]) + 1)
    if len(series.channels) != Y.shape[1]:
        raise DimensionMismatch("channel names do not match the number of columns")
    return series


@dataclass(frozen=True)
class Hyperparams:
    """Number of regimes ``K``, per-regime polynomial degrees and logistic degree ``u``.

    ``degrees`` may be given as a single int shared by every regime.
    """

    K: int
    degrees: tuple = 0
    u: int = 1

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DataError(f"K must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))
        degrees = self.degrees
        if np.isscalar(degrees):
            degrees = (int(degrees),) * self.K
        degrees = tuple(int(p) for p in degrees)
        if len(degrees) != self.K:
            raise DataError(f"expected {self.K} polynomial degrees, got {len(degrees)}")
        if any(p < 0 for p in degrees):
            raise DataError("polynomial degrees must be >= 0")
        if int(self.u) != self.u or self.u < 0:
            raise DataError(f"u must be a non-negative integer, got {self.u}")
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "u", int(self.u))

    @property
    def shared_degree(self) -> Optional[int]:
        return self.degrees[0] if len(set(self.degrees)) == 1 else None

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    def check_sample_size(self, n: int) -> None:
        if self.max_degree + 1 > n or self.u + 1 > n:
            raise DataError(
                f"n={n} too small for degrees {self.degrees} and u={self.u}"
            )


@dataclass(frozen=True)
class RegimeParams:
    """Regression coefficients ``B`` ((p+1) x d) and noise covariance ``Sigma`` (d x d)."""

    B: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        S = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if S.shape != (B.shape[1], B.shape[1]):
            raise DimensionMismatch(
                f"covariance shape {S.shape} does not match {B.shape[1]} channels"
            )
        if not np.allclose(S, S.T, rtol=1e-12, atol=0.0):
            raise DataError("covariance matrix is not symmetric")
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "Sigma", _frozen(S))

    @property
    def degree(self) -> int:
        return self.B.shape[0] - 1


@dataclass(frozen=True)
class MrhlpModel:
    """Fitted or user-specified model parameters.

    ``weights`` is the K x (u+1) logistic coefficient matrix whose last row is
    pinned to zero. ``time_range`` fixes the affine map of time onto [0, 1]
    used by every covariate; when ``None`` each series is mapped using its
    own first and last time stamps.
    """

    hyper: Hyperparams
    weights: np.ndarray
    regimes: tuple
    time_range: Optional[tuple] = None

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=float))
        K, u = self.hyper.K, self.hyper.u
        if W.shape != (K, u + 1):
            raise DimensionMismatch(f"weights must be {K}x{u + 1}, got {W.shape}")
        if np.any(W[-1] != 0.0):
            raise DataError("last row of the logistic weights must be zero")
        regimes = tuple(self.regimes)
        if len(regimes) != K:
            raise DimensionMismatch(f"expected {K} regimes, got {len(regimes)}")
        d = regimes[0].B.shape[1]
        for k, (reg, p) in enumerate(zip(regimes, self.hyper.degrees)):
            if reg.B.shape != (p + 1, d):
                raise DimensionMismatch(
                    f"regime {k + 1}: coefficients {reg.B.shape}, expected {(p + 1, d)}"
                )
        if self.time_range is not None:
            t0, t1 = (float(x) for x in self.time_range)
            if not t1 >= t0:
                raise DataError("time_range must be increasing")
            object.__setattr__(self, "time_range", (t0, t1))
        object.__setattr__(self, "weights", _frozen(W))
        object.__setattr__(self, "regimes", regimes)

    @property
    def K(self) -> int:
        return self.hyper.K

    @property
    def d(self) -> int:
        return self.regimes[0].B.shape[1]

    def with_time_range(self, time_range) -> "MrhlpModel":
        return MrhlpModel(self.hyper, self.weights, self.regimes, time_range)

    def to_dict(self, metadata=None) -> dict:
        doc = {
            "k": self.K,
            "degrees": list(self.hyper.degrees),
            "u": self.hyper.u,
            "d": self.d,
            "time_range": None if self.time_range is None else list(self.time_range),
            "weights": self.weights.tolist(),
            "regimes": [
                {"coefficients": r.B.tolist(), "covariance": r.Sigma.tolist()}
                for r in self.regimes
            ],
        }
        if metadata is not None:
            doc["metadata"] = dict(metadata)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MrhlpModel":
        try:
            hyper = Hyperparams(doc["k"], tuple(doc["degrees"]), doc.get("u", 1))
            regimes = tuple(
                RegimeParams(np.array(r["coefficients"], dtype=float), np.array(r["covariance"], dtype=float))
                for r in doc["regimes"]
            )
            weights = np.array(doc["weights"], dtype=float).reshape(hyper.K, hyper.u + 1)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed model document: {exc}") from exc
        model = cls(hyper, weights, regimes, doc.get("time_range"))
        if "d" in doc and int(doc["d"]) != model.d:
            raise DimensionMismatch(f"model declares d={doc['d']} but coefficients have {model.d}")
        return model


@dataclass(frozen=True)
class Segmentation:
    """MAP labels (1-based) and the n x K prior-probability trace they come from."""

    labels: np.ndarray
    pi_trace: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(self.labels, dtype=int))
        object.__setattr__(self, "pi_trace", _frozen(self.pi_trace))


@dataclass(frozen=True)
class FitReport:
    loglik_history: tuple
    converged: bool
    iterations: int
    bic: float
    restart_index: int
    seed: int
    rescue_iterations: tuple = ()
    restart_logliks: tuple = ()
    failed_restarts: tuple = field(default=())

    @property
    def loglik(self) -> float:
        return self.loglik_history[-1]

    def to_dict(self) -> dict:
        return {
            "loglik": self.loglik,
            "bic": self.bic,
            "converged": self.converged,
            "iterations": self.iterations,
            "restart_index": self.restart_index,
            "seed": self.seed,
            "loglik_history": list(self.loglik_history),
            "rescue_iterations": list(self.rescue_iterations),
            "restart_logliks": list(self.restart_logliks),
            "failed_restarts": [list(f) for f in self.failed_restarts],
        }


def check_posterior(tau: np.ndarray) -> np.ndarray:
    """Validate an n x K responsibility matrix (entries in [0, 1], rows summing to 1)."""
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 2 or tau.shape[0] == 0:
        raise DataError("posterior matrix must be a non-empty 2-d array")
    if np.any(tau < 0) or np.any(tau > 1):
        raise DataError("posterior entries must lie in [0, 1]")
    worst = np.max(np.abs(tau.sum(axis=1) - 1.0))
    if worst > ROW_SUM_TOL * 10:
        raise DataError(f"posterior rows must sum to 1 (max deviation {worst:.3g})")
    return tau


def num_free_params(hyper: Hyperparams, d: int, univariate_count: bool = False) -> int:
    """Number of free parameters used in the BIC penalty.

    The general count is ``sum_k d (p_k + 1) + K d (d + 1) / 2 + (K - 1)(u + 1)``.
    ``univariate_count=True`` returns ``K (p + 4) - 2`` instead, defined for
    univariate series with a shared degree; it coincides with the general
    count when ``u == 1``.
    """
    K, u = hyper.K, hyper.u
    if univariate_count:
        if d != 1 or hyper.shared_degree is None:
            raise DataError("univariate count needs d == 1 and a shared degree")
        return K * (hyper.shared_degree + 4) - 2
    regression = sum(d * (p + 1) for p in hyper.degrees)
    covariance = K * d * (d + 1) // 2
    logistic = (K - 1) * (u + 1)
    return regression + covariance + logistic


def rescale_time(t, time_range=None) -> np.ndarray:
    """Affine map of ``t`` onto [0, 1] using ``time_range`` (default: first/last stamp)."""
    t = np.asarray(t, dtype=float)
    t0, t1 = (t[0], t[-1]) if time_range is None else time_range
    span = t1 - t0
    if span <= 0:
        return np.zeros_like(t)
    return (t - t0) / span


def poly_design(t_scaled, degree: int) -> np.ndarray:
    """Rows ``(1, s, s**2, ..., s**degree)`` for each rescaled time ``s``."""
    return np.vander(np.asarray(t_scaled, dtype=float), degree + 1, increasing=True)


def bic(loglik: float, hyper: Hyperparams, d: int, n: int, univariate_count: bool = False) -> float:
    """``loglik - nu * log(n) / 2``; larger is better."""
    if n < 1:
        raise DataError("BIC needs at least one observation")
    return float(loglik) - num_free_params(hyper, d, univariate_count) * np.log(n) / 2.0
