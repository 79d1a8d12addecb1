"""Exact single-output Gaussian process regression.

Implements stationary kernels (squared-exponential, Matern 3/2 and 5/2 with
automatic-relevance lengthscales), marginal-likelihood hyperparameter fitting
with multistart in log-space, and closed-form posterior prediction:

    mean(u*) = k*' [K + s2 I]^-1 (y - mu 1) + mu
    var(u*)  = k(u*, u*) - k*' [K + s2 I]^-1 k*

Inputs and targets are standardized internally at fit time (the raw scales of
the process inputs make maximum-likelihood estimation ill-conditioned);
posteriors are reported back in raw units. Hand-built instances via
:meth:`GaussianProcess.from_data` use identity transforms, so the equations
above hold verbatim for them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .numerics import (
    BoxDomain,
    PsdFactorization,
    Standardizer,
    factor_psd,
    multistart_minimize,
    solve_lower,
    solve_psd,
    standardizer_fit,
)

NOISE_FLOOR = 1e-8
LOG_2PI = math.log(2.0 * math.pi)

# MLE search box (standardized units, log-space) -- chosen to prevent
# degeneracies when fitting from as few as a dozen points.
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_BOUNDS = (1e-4, 1e2)
NOISE_BOUNDS = (NOISE_FLOOR, 1.0)
DEFAULT_FIT_RESTARTS = 10


class KernelFamily(enum.Enum):
    SQUARED_EXPONENTIAL = "squared_exponential"
    MATERN32 = "matern32"
    MATERN52 = "matern52"


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel: family, signal variance and ARD lengthscales."""

    family: KernelFamily
    signal_variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if self.signal_variance <= 0.0:
            raise ValueError("signal_variance must be positive")
        if np.any(ls <= 0.0):
            raise ValueError("lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True)
class Posterior:
    """Predictive mean and (nonnegative, noise-free) variance at one point."""

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError("variance must be nonnegative")


def kernel_from_sqdist(
    family: KernelFamily, sq_dist: np.ndarray, signal_variance: float
) -> np.ndarray:
    """Covariance from squared scaled distance r2 = sum((du/l)^2)."""
    if family is KernelFamily.SQUARED_EXPONENTIAL:
        return signal_variance * np.exp(-0.5 * sq_dist)
    r = np.sqrt(np.maximum(sq_dist, 0.0))
    if family is KernelFamily.MATERN32:
        a = math.sqrt(3.0) * r
        return signal_variance * (1.0 + a) * np.exp(-a)
    if family is KernelFamily.MATERN52:
        a = math.sqrt(5.0) * r
        return signal_variance * (1.0 + a + a * a / 3.0) * np.exp(-a)
    raise ValueError(f"unknown kernel family {family}")


def kernel_eval(spec: KernelSpec, u: np.ndarray, v: np.ndarray) -> float:
    """Covariance between two points."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.size != spec.dim or v.size != spec.dim:
        raise DimensionMismatch(
            f"points of dim {u.size}/{v.size} vs {spec.dim} lengthscales"
        )
    d = (u - v) / spec.lengthscales
    return float(kernel_from_sqdist(spec.family, np.dot(d, d), spec.signal_variance))


def kernel_matrix(
    spec: KernelSpec, a: np.ndarray, b: Optional[np.ndarray] = None
) -> np.ndarray:
    """Cross-covariance matrix k(a_i, b_j); Gram matrix when ``b`` is None."""
    a = np.atleast_2d(np.asarray(a, dtype=float)) / spec.lengthscales
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float)) / spec.lengthscales
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return kernel_from_sqdist(spec.family, np.maximum(sq, 0.0), spec.signal_variance)


@dataclass(frozen=True)
class GaussianProcess:
    """Fitted GP: hyperparameters plus cached Gram factorization.

    ``kernel``, ``noise_variance`` and ``prior_mean`` live in the transformed
    (standardized) space; ``training_inputs``/``training_targets`` are kept in
    raw units. Instances are immutable; posterior queries are read-only.
    """

    kernel: KernelSpec
    noise_variance: float
    prior_mean: float
    training_inputs: np.ndarray
    training_targets: np.ndarray
    input_transform: Standardizer
    target_transform: Standardizer
    z_inputs: np.ndarray = field(repr=False)
    z_targets: np.ndarray = field(repr=False)
    gram_factorization: PsdFactorization = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    @staticmethod
    def from_data(
        kernel: KernelSpec,
        noise_variance: float,
        prior_mean: float,
        inputs: np.ndarray,
        targets: np.ndarray,
        input_transform: Optional[Standardizer] = None,
        target_transform: Optional[Standardizer] = None,
    ) -> "GaussianProcess":
        """Build a GP with given hyperparameters (no fitting).

        Without explicit transforms the identity is used, so posterior and
        likelihood formulas apply to the raw data as written.
        """
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if inputs.shape[0] != targets.size:
            raise DimensionMismatch(
                f"{inputs.shape[0]} inputs vs {targets.size} targets"
            )
        if inputs.shape[1] != kernel.dim:
            raise DimensionMismatch(
                f"inputs of dim {inputs.shape[1]} vs kernel dim {kernel.dim}"
            )
        if noise_variance < 0.0:
            raise ValueError("noise_variance must be nonnegative")
        in_t = input_transform or Standardizer.identity(inputs.shape[1])
        out_t = target_transform or Standardizer.identity(1)
        z_in = in_t.apply(inputs)
        z_y = (targets - out_t.shift[0]) / out_t.scale[0]
        gram = kernel_matrix(kernel, z_in)
        fact = factor_psd(gram + noise_variance * np.eye(len(z_y)))
        alpha = solve_psd(fact, z_y - prior_mean)
        return GaussianProcess(
            kernel=kernel,
            noise_variance=noise_variance,
            prior_mean=prior_mean,
            training_inputs=inputs,
            training_targets=targets,
            input_transform=in_t,
            target_transform=out_t,
            z_inputs=z_in,
            z_targets=z_y,
            gram_factorization=fact,
            alpha=alpha,
        )

    @property
    def n_training(self) -> int:
        return self.training_targets.size

    def posterior(self, u: np.ndarray) -> Posterior:
        return posterior(self, u)


def log_marginal_likelihood(gp: GaussianProcess) -> float:
    """Gaussian log-evidence of the (transformed) training targets.

    Equals -0.5 (y-mu)' [K+s2 I]^-1 (y-mu) - 0.5 log det[K+s2 I]
    - (N/2) log 2pi, computed through the cached factorization. For fitted
    GPs this is the likelihood of the standardized data, which differs from
    the raw-data likelihood only by a hyperparameter-independent constant.
    """
    if gp.n_training < 1:
        raise ValueError("GP has no training data")
    resid = gp.z_targets - gp.prior_mean
    quad = float(resid @ gp.alpha)
    return -0.5 * quad - 0.5 * gp.gram_factorization.log_det - 0.5 * gp.n_training * LOG_2PI


def posterior(gp: GaussianProcess, u: np.ndarray) -> Posterior:
    """Posterior mean/variance at a single point, in raw units."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != gp.kernel.dim:
        raise DimensionMismatch(f"point of dim {u.size} vs GP dim {gp.kernel.dim}")
    means, variances = posterior_many(gp, u[None, :])
    return Posterior(float(means[0]), float(variances[0]))


def posterior_many(gp: GaussianProcess, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior over rows of ``points``; returns (means, variances)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != gp.kernel.dim:
        raise DimensionMismatch(f"points of dim {pts.shape[1]} vs GP dim {gp.kernel.dim}")
    z = gp.input_transform.apply(pts)
    k_star = kernel_matrix(gp.kernel, z, gp.z_inputs)  # (M, N)
    mean_z = k_star @ gp.alpha + gp.prior_mean
    half = solve_lower(gp.gram_factorization, k_star.T)  # (N, M)
    var_z = gp.kernel.signal_variance - np.sum(half * half, axis=0)
    var_z = np.maximum(var_z, 0.0)
    scale = gp.target_transform.scale[0]
    shift = gp.target_transform.shift[0]
    return mean_z * scale + shift, var_z * scale * scale


def _hyper_domain(dim: int, fit_noise: bool) -> BoxDomain:
    lo = [math.log(LENGTHSCALE_BOUNDS[0])] * dim + [math.log(SIGNAL_BOUNDS[0])]
    hi = [math.log(LENGTHSCALE_BOUNDS[1])] * dim + [math.log(SIGNAL_BOUNDS[1])]
    if fit_noise:
        lo.append(math.log(NOISE_BOUNDS[0]))
        hi.append(math.log(NOISE_BOUNDS[1]))
    return BoxDomain(np.array(lo), np.array(hi))


def _hyper_start(dim: int, fit_noise: bool) -> np.ndarray:
    start = [0.0] * dim + [0.0]  # lengthscales 1, signal 1 (standardized units)
    if fit_noise:
        start.append(math.log(1e-2))
    return np.array(start)


def negative_log_likelihood_fn(
    family: KernelFamily,
    z_inputs: np.ndarray,
    z_targets: np.ndarray,
    fixed_noise: Optional[float],
):
    """Closure computing the negative log marginal likelihood from a
    log-hyperparameter vector; squared per-dimension differences are
    precomputed once, which dominates the per-call cost otherwise."""
    n, dim = z_inputs.shape
    diff = z_inputs[:, None, :] - z_inputs[None, :, :]  # (N, N, d)
    diff2 = diff * diff
    eye = np.eye(n)

    def nll(x: np.ndarray) -> float:
        inv_l2 = np.exp(-2.0 * x[:dim])
        signal = math.exp(x[dim])
        noise = fixed_noise if fixed_noise is not None else math.exp(x[dim + 1])
        sq = diff2 @ inv_l2
        gram = kernel_from_sqdist(family, sq, signal)
        try:
            fact = factor_psd(gram + noise * eye)
        except NotPositiveDefinite:
            return 1e300
        alpha = solve_psd(fact, z_targets)
        val = 0.5 * float(z_targets @ alpha) + 0.5 * fact.log_det + 0.5 * n * LOG_2PI
        return val if np.isfinite(val) else 1e300

    return nll


def fit_gp(
    training_inputs: np.ndarray,
    training_targets: np.ndarray,
    family: KernelFamily = KernelFamily.MATERN32,
    n_restarts: int = DEFAULT_FIT_RESTARTS,
    rng: Optional[np.random.Generator] = None,
    noise_variance: Optional[float] = None,
    budget: int = 400,
) -> GaussianProcess:
    """Fit hyperparameters by maximum marginal likelihood with multistart.

    Parameters
    ----------
    noise_variance : fix the noise variance instead of estimating it
        (deterministic data sources pin it to the 1e-8 floor).
    n_restarts : total number of local searches (first from a fixed
        heuristic start, the rest from random points in the log-space box).

    Notes
    -----
    Identical targets make every hyperparameter choice explain the data
    equally badly; instead of failing, the fit degenerates gracefully to a
    prior-mean-only GP with tiny signal variance.
    """
    inputs = np.atleast_2d(np.asarray(training_inputs, dtype=float))
    targets = np.atleast_1d(np.asarray(training_targets, dtype=float))
    n, dim = inputs.shape
    if n < 2:
        raise ValueError(f"need at least 2 training points, got {n}")
    if targets.size != n:
        raise DimensionMismatch(f"{n} inputs vs {targets.size} targets")

    in_t = standardizer_fit(inputs)
    y_shift = float(targets.mean())
    y_scale = float(targets.std())
    if y_scale == 0.0:  # degenerate: constant targets
        out_t = Standardizer(np.array([y_shift]), np.array([1.0]))
        kernel = KernelSpec(family, 1e-8, np.ones(dim))
        pinned = noise_variance if noise_variance is not None else NOISE_FLOOR
        return GaussianProcess.from_data(
            kernel, max(pinned, NOISE_FLOOR), 0.0, inputs, targets, in_t, out_t
        )
    out_t = Standardizer(np.array([y_shift]), np.array([y_scale]))

    z_in = in_t.apply(inputs)
    z_y = (targets - y_shift) / y_scale
    fixed_noise = None if noise_variance is None else max(noise_variance, NOISE_FLOOR)
    nll = negative_log_likelihood_fn(family, z_in, z_y, fixed_noise)
    domain = _hyper_domain(dim, fit_noise=fixed_noise is None)
    best_x, _ = multistart_minimize(
        nll, domain, n_restarts, budget, rng, incumbent=_hyper_start(dim, fixed_noise is None)
    )

    kernel = KernelSpec(family, math.exp(best_x[dim]), np.exp(best_x[:dim]))
    noise = fixed_noise if fixed_noise is not None else math.exp(best_x[dim + 1])
    return GaussianProcess.from_data(kernel, noise, 0.0, inputs, targets, in_t, out_t)
