"""Diagnostics for variational inference.

Two checks are provided: the Pareto tail-shape diagnostic ``k-hat`` with
Pareto-smoothed importance weights (:mod:`vidiag.psis`) and variational
simulation-based calibration (:mod:`vidiag.vsbc`). A mean-field Gaussian
ADVI engine (:mod:`vidiag.vi`), a small model zoo (:mod:`vidiag.models`) and
a random-walk Metropolis reference sampler (:mod:`vidiag.reference`) are
included so the diagnostics can be exercised end to end.
"""
__version__ = "0.1.0"

from vidiag.gpd import GpdParams, ParetoFit, fit_gpd_tail, gpd_cdf, gpd_log_pdf, gpd_quantile  # noqa: E402
from vidiag.psis import (  # noqa: E402
    Category,
    DrawBatch,
    SmoothedWeights,
    khat_category,
    khat_to_renyi_order,
    log_ratios,
    psis_diagnose,
    psis_moments,
    psis_smooth,
    snis_estimate,
)
from vidiag.vi import MeanFieldGaussian, ViConfig, advi_fit, elbo_estimate, sample_q  # noqa: E402

__all__ = [
    "__version__",
    "GpdParams", "ParetoFit", "fit_gpd_tail", "gpd_cdf", "gpd_log_pdf", "gpd_quantile",
    "Category", "DrawBatch", "SmoothedWeights", "khat_category", "khat_to_renyi_order",
    "log_ratios", "psis_diagnose", "psis_moments", "psis_smooth", "snis_estimate",
    "MeanFieldGaussian", "ViConfig", "advi_fit", "elbo_estimate", "sample_q",
]
