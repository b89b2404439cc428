"""Density ridge estimation with kernel derivatives and Gumbel-calibrated
confidence regions."""

from .confidence import (
    ConfidenceRegion,
    RegionParams,
    b_h_threshold,
    build_region,
    c_hat_surface_integral,
    contains_set,
    z_alpha,
)
from .coverage import ExperimentPlan, run_coverage, run_gumbel_check, wilson_interval
from .density import Component, DensityModel, SampleSet, gaussian, model_derivs, sample, true_ridge
from .errors import (
    DegenerateFrameError,
    EmptyRidgeError,
    InputFormatError,
    RidgeConfError,
    SingularMatrixError,
    UnsupportedOrderError,
)
from .geometry import m_vectors, ordered_eigen, ridge_stats
from .indexing import build_index_maps
from .kde import EvalGrid, KernelDensity, kde_eval, kde_grid, kde_pack
from .kernel import KernelSpec, kernel_constants, omega_closed_form, omega_quadrature
from .ridge import RidgeSet, find_ridge, hausdorff, link_polyline

__version__ = "0.1.0"

__all__ = [
    "Component", "ConfidenceRegion", "DegenerateFrameError", "DensityModel", "EmptyRidgeError",
    "EvalGrid", "ExperimentPlan", "InputFormatError", "KernelDensity", "KernelSpec", "RegionParams",
    "RidgeConfError", "RidgeSet", "SampleSet", "SingularMatrixError", "UnsupportedOrderError",
    "b_h_threshold", "build_index_maps", "build_region", "c_hat_surface_integral", "contains_set",
    "find_ridge", "gaussian", "hausdorff", "kde_eval", "kde_grid", "kde_pack", "kernel_constants",
    "link_polyline", "m_vectors", "model_derivs", "omega_closed_form", "omega_quadrature",
    "ordered_eigen", "ridge_stats", "run_coverage", "run_gumbel_check", "sample", "true_ridge",
    "wilson_interval", "z_alpha",
]
