"""Multiple regression with a hidden logistic process (MRHLP).

Unsupervised joint segmentation of multivariate time series: each sample
is drawn from one of K polynomial regressions in time, chosen by a
softmax of polynomial functions of time.
"""

from .core import (
    FitReport,
    Hyperparams,
    MrhlpModel,
    RegimeParams,
    Segmentation,
    TimeSeries,
    bic,
    num_free_params,
    validate_series,
)
from .em import EmOptions, e_step, fit, log_likelihood, m_step_covariance, m_step_regression
from .logistic import IrlsOptions, build_covariates, irls_fit, priors
from .segmentation import fp_fn_rates, map_segment, match_labels, posterior_segment
from .selection import SelectionGrid, select
from .synthetic import SimulationSpec, naive_loglik, simulate

__version__ = "0.1.0"
