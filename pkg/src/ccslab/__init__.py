"""Constrained diffusion sampling lab over analytic score models.

Deterministic samplers (stepwise chain and probability-flow ODE) run on
exact Gaussian-mixture scores; spherical noise perturbation generates sample
batches centered on a target mean; a bisection controller pins the batch
diversity; and a verification ledger re-derives every numerical invariant.
"""

from ._kernels import BACKEND as kernel_backend
from ._version import __version__
from .control import (
    ControllerConfig,
    ControllerTrace,
    PerturbationSpec,
    SampleBatch,
    ccdf_sample,
    ccs_edit_sample,
    ccs_full_sample,
    ccs_partial_sample,
    controller_tune,
    gp_sample,
    mechanism_handle,
    run_mechanism,
)
from .errors import (
    DegenerateGeometryError,
    InputError,
    InversionError,
    LabError,
    NumericsError,
)
from .geometry import (
    angle_between,
    c0_for_distance,
    concentration_bound,
    norm_drift_stats,
    slerp,
)
from .metrics import psnr_of_mean, r_squared, rmse, sample_sd
from .protocols import compare_baselines, linearity_protocol
from .reports import ExperimentReport, LinearityReport
from .sampler import (
    Trajectory,
    ddim_invert,
    ddim_sample,
    ddim_sample_batch,
    ddim_step,
    jacobian_propagate,
    lipschitz_product_bound,
    ode_integrate,
)
from .schedule import BetaSpec, NoiseSchedule, ddim_coeffs_from_pair
from .scoremodel import CfgSpec, GaussianMixtureModel
from .verify import VerifyLedger, verify_suite

__all__ = [
    "__version__",
    "kernel_backend",
    "BetaSpec",
    "NoiseSchedule",
    "ddim_coeffs_from_pair",
    "CfgSpec",
    "GaussianMixtureModel",
    "Trajectory",
    "ddim_step",
    "ddim_sample",
    "ddim_sample_batch",
    "ddim_invert",
    "ode_integrate",
    "jacobian_propagate",
    "lipschitz_product_bound",
    "angle_between",
    "slerp",
    "c0_for_distance",
    "concentration_bound",
    "norm_drift_stats",
    "SampleBatch",
    "PerturbationSpec",
    "ControllerConfig",
    "ControllerTrace",
    "ccs_full_sample",
    "ccs_partial_sample",
    "ccs_edit_sample",
    "gp_sample",
    "ccdf_sample",
    "run_mechanism",
    "mechanism_handle",
    "controller_tune",
    "rmse",
    "psnr_of_mean",
    "sample_sd",
    "r_squared",
    "linearity_protocol",
    "compare_baselines",
    "LinearityReport",
    "ExperimentReport",
    "verify_suite",
    "VerifyLedger",
    "LabError",
    "InputError",
    "NumericsError",
    "InversionError",
    "DegenerateGeometryError",
]
