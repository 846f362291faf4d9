"""Vertically weighted averages: jump-preserving signal estimates with
jackknife/bootstrap standard errors, fixed-sample and two-stage fixed-width
confidence intervals, and the Monte Carlo harness used to check their
coverage."""

from .errors import (
    DegenerateNeighborhoodError,
    DegenerateScaleError,
    DomainError,
    InsufficientDataError,
    ResamplingDegeneracyError,
    VWAError,
)
from .estimator import (
    Estimate,
    FunctionalEstimates,
    NeighborhoodSample,
    empirical_functionals,
    fixpoint_theta,
    leave_one_out,
    leave_one_out_values,
    reconstruct,
    vwa,
    weighted_average,
)
from .intervals import (
    BootOptions,
    ConfidenceInterval,
    TwoStageRun,
    bootstrap_final_sample_size,
    conditional_fixed_sample_ci,
    final_sample_size,
    initial_sample_size,
    normal_quantile,
    run_two_stage,
    unconditional_fixed_sample_ci,
)
from .kernels import Family, KernelSpec, evaluate
from .resampling import (
    JackknifeResult,
    RngSeed,
    bootstrap_t_quantile,
    bootstrap_variance_unconditional,
    jackknife,
    normal_reference_bandwidth,
    resample_empirical,
    smooth_resample,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateNeighborhoodError",
    "DegenerateScaleError",
    "DomainError",
    "InsufficientDataError",
    "ResamplingDegeneracyError",
    "VWAError",
    "Estimate",
    "FunctionalEstimates",
    "NeighborhoodSample",
    "empirical_functionals",
    "fixpoint_theta",
    "leave_one_out",
    "leave_one_out_values",
    "reconstruct",
    "vwa",
    "weighted_average",
    "BootOptions",
    "ConfidenceInterval",
    "TwoStageRun",
    "bootstrap_final_sample_size",
    "conditional_fixed_sample_ci",
    "final_sample_size",
    "initial_sample_size",
    "normal_quantile",
    "run_two_stage",
    "unconditional_fixed_sample_ci",
    "JackknifeResult",
    "RngSeed",
    "bootstrap_t_quantile",
    "bootstrap_variance_unconditional",
    "jackknife",
    "normal_reference_bandwidth",
    "resample_empirical",
    "smooth_resample",
    "Family",
    "KernelSpec",
    "evaluate",
]
