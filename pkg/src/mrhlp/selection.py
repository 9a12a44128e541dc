"""BIC-based choice of the number of regimes and polynomial degrees."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import Hyperparams, TimeSeries, bic, num_free_params, validate_series
from .em import EmOptions, fit
from .exceptions import DataError, NumericalError

__all__ = ["bic", "SelectionGrid", "SelectionEntry", "SelectionResult", "select"]

logger = logging.getLogger(__name__)


def _as_range(r, name, minimum):
    lo, hi = (r, r) if isinstance(r, int) else tuple(r)
    if lo > hi or lo < minimum:
        raise DataError(f"{name} range {lo}..{hi} is empty or below {minimum}")
    return int(lo), int(hi)


@dataclass(frozen=True)
class SelectionGrid:
    """Inclusive ``(lo, hi)`` ranges for K, the shared degree p and u."""

    K_range: tuple = (1, 5)
    p_range: tuple = (0, 0)
    u_range: tuple = (1, 1)

    def __post_init__(self):
        object.__setattr__(self, "K_range", _as_range(self.K_range, "K", 1))
        object.__setattr__(self, "p_range", _as_range(self.p_range, "p", 0))
        object.__setattr__(self, "u_range", _as_range(self.u_range, "u", 0))

    def cells(self):
        for K in range(self.K_range[0], self.K_range[1] + 1):
            for p in range(self.p_range[0], self.p_range[1] + 1):
                for u in range(self.u_range[0], self.u_range[1] + 1):
                    yield Hyperparams(K, p, u)


@dataclass
class SelectionEntry:
    hyper: Hyperparams
    model: object
    report: object
    nu: int
    bic: float

    def row(self) -> dict:
        return {
            "K": self.hyper.K,
            "p": self.hyper.shared_degree,
            "u": self.hyper.u,
            "loglik": self.report.loglik,
            "nu": self.nu,
            "bic": self.bic,
            "converged": int(self.report.converged),
        }


@dataclass
class SelectionResult:
    ranked: list
    failed: list = field(default_factory=list)

    @property
    def best(self) -> SelectionEntry:
        return self.ranked[0]

    def __iter__(self):
        return iter(self.ranked)

    def __len__(self):
        return len(self.ranked)


def select(series: TimeSeries, grid: SelectionGrid, opts: EmOptions | None = None,
           threads: int = 1, univariate_count: bool = False) -> SelectionResult:
    """Fit every grid cell and rank the fits by BIC (descending, ties to fewer parameters).

    Every cell uses the same base seed. Cells whose restarts all fail, or
    that are too large for the series, are listed in ``failed``.
    """
    opts = opts or EmOptions()
    validate_series(series)
    cells = list(grid.cells())

    def run(hyper):
        try:
            model, _, report = fit(series, hyper, opts)
        except (NumericalError, DataError) as exc:
            logger.warning("grid cell K=%d p=%s u=%d failed: %s", hyper.K, hyper.degrees[0], hyper.u, exc)
            return hyper, None, None, exc
        return hyper, model, report, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(h) for h in cells]

    entries, failed = [], []
    for hyper, model, report, exc in outcomes:
        if exc is not None:
            failed.append((hyper, str(exc)))
            continue
        nu = num_free_params(hyper, series.d, univariate_count)
        score = bic(report.loglik, hyper, series.d, series.n, univariate_count)
        entries.append(SelectionEntry(hyper, model, report, nu, score))
    # stable sort keeps grid order among exact ties
    entries.sort(key=lambda e: (-e.bic, e.nu))
    return SelectionResult(entries, failed)
