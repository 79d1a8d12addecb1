"""Self-contained numerical kernels: PSD solves, fixed-step ODE integration,
bounded derivative-free search, and standardization."""

from .linalg import PsdFactorization, factor_psd, inverse_from_factor, solve_lower, solve_psd
from .ode import (
    DEFAULT_STEP,
    OdeTrajectory,
    PiecewiseConstantSchedule,
    integrate_ode,
    integrate_ode_batch,
)
from .optimize import DEFAULT_BUDGET, BoxDomain, local_minimize, multistart_minimize
from .scaling import Standardizer, standardizer_fit

__all__ = [
    "PsdFactorization",
    "factor_psd",
    "solve_psd",
    "solve_lower",
    "inverse_from_factor",
    "OdeTrajectory",
    "PiecewiseConstantSchedule",
    "integrate_ode",
    "integrate_ode_batch",
    "DEFAULT_STEP",
    "BoxDomain",
    "local_minimize",
    "multistart_minimize",
    "DEFAULT_BUDGET",
    "Standardizer",
    "standardizer_fit",
]
