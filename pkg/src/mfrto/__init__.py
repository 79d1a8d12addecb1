"""Real-time optimization under plant-model mismatch with multi-fidelity
Gaussian processes, chance constraints and trust regions."""

from .chance import RiskSpec, cantelli_multiplier, robust_constraint_value
from .gp import (
    GaussianProcess,
    KernelFamily,
    KernelSpec,
    Posterior,
    fit_gp,
    kernel_eval,
    log_marginal_likelihood,
    posterior,
    posterior_many,
)
from .multifidelity import (
    MultiFidelitySurrogate,
    NestedDesign,
    build_nested_design,
    fit_multifidelity,
    mf_posterior,
    neighborhood_box,
)
from .rto import (
    AcquisitionKind,
    AcquisitionSpec,
    ExperimentRecord,
    RtoConfig,
    RtoProblem,
    TrustRegionState,
    acquisition_value,
    merit_ratio,
    run_rto,
    solve_subproblem,
    update_trust_region,
)

__version__ = "0.1.0"

__all__ = [
    "RiskSpec",
    "cantelli_multiplier",
    "robust_constraint_value",
    "GaussianProcess",
    "KernelFamily",
    "KernelSpec",
    "Posterior",
    "fit_gp",
    "kernel_eval",
    "log_marginal_likelihood",
    "posterior",
    "posterior_many",
    "MultiFidelitySurrogate",
    "NestedDesign",
    "build_nested_design",
    "fit_multifidelity",
    "mf_posterior",
    "neighborhood_box",
    "AcquisitionKind",
    "AcquisitionSpec",
    "ExperimentRecord",
    "RtoConfig",
    "RtoProblem",
    "TrustRegionState",
    "acquisition_value",
    "merit_ratio",
    "run_rto",
    "solve_subproblem",
    "update_trust_region",
]
