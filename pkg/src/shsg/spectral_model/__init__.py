"""Spectral-domain model of the stochastic component."""

from .autoregression import (ArFit, ArParams, companion_radius, fit_ar, fit_ar_batch,
                             gaussian_ar_bic, modal_order, select_P)
from .covariance import (AxialCov, InnovationCov, NuggetField, admissible_mask,
                         axial_covariance, axial_covariance_pairs, block_orders,
                         build_innovation, empirical_axial_cov, innovation_cov,
                         nonzero_counts, order_indices, stationary_axial_cov)
from .selection import (cross_corr_check, estimate_nugget, gaussianity_test, jarque_bera,
                        select_Q)
from .tgh import (PiecewiseInverse, TghFit, TghParams, fit_tgh_ar, tgh_ar_loglik,
                  tgh_derivative, tgh_forward, tgh_inverse)

__all__ = [
    "ArFit", "ArParams", "AxialCov", "InnovationCov", "NuggetField", "PiecewiseInverse",
    "TghFit", "TghParams", "admissible_mask", "axial_covariance", "axial_covariance_pairs",
    "block_orders", "build_innovation", "companion_radius", "cross_corr_check",
    "empirical_axial_cov", "estimate_nugget", "fit_ar", "fit_ar_batch", "fit_tgh_ar",
    "gaussian_ar_bic", "gaussianity_test", "innovation_cov", "jarque_bera", "modal_order",
    "nonzero_counts", "order_indices", "select_P", "select_Q", "stationary_axial_cov",
    "tgh_ar_loglik", "tgh_derivative", "tgh_forward", "tgh_inverse",
]
