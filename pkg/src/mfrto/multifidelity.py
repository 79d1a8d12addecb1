"""Two-level autoregressive multi-fidelity Gaussian process.

The high-fidelity response is modelled as

    g_high(u) = eps * g_low(u) + delta(u)

with g_low a GP over cheap deterministic simulations and delta a discrepancy
GP over measured residuals. Keeping the designs nested (every measurement
input also appears in the simulation design) decouples inference into two
standard GP regressions: stage 1 fits g_low on the simulation data, stage 2
fits delta's hyperparameters jointly with the scaling constant eps by
maximizing the marginal likelihood of the residuals

    r(eps) = y_high - eps * m_low(D_high).

The combined posterior is then

    mean(u*) = eps * m_low(u*) + m_delta(u*)
    var(u*)  = eps^2 * var_low(u*) + var_delta(u*)

where m_delta/var_delta are the discrepancy GP's posterior (its constant
prior mean plays the role of mu_delta).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ModelEvaluationFailed, NotPositiveDefinite
from .gp import (
    LOG_2PI,
    NOISE_FLOOR,
    GaussianProcess,
    KernelFamily,
    KernelSpec,
    Posterior,
    _hyper_domain,
    _hyper_start,
    fit_gp,
    kernel_from_sqdist,
    posterior,
    posterior_many,
)
from .numerics import (
    BoxDomain,
    Standardizer,
    factor_psd,
    multistart_minimize,
    solve_psd,
    standardizer_fit,
)

logger = logging.getLogger(__name__)

EPSILON_BOUNDS = (-10.0, 10.0)
LOW_FIDELITY_NOISE = NOISE_FLOOR  # simulations are deterministic


@dataclass(frozen=True)
class NestedDesign:
    """Training data for both fidelity levels with nested inputs.

    Every plant (high-fidelity) input row must occur bit-identically among
    the model (low-fidelity) inputs, and plant rows must be unique.
    """

    model_inputs: np.ndarray
    model_targets: np.ndarray
    plant_inputs: np.ndarray
    plant_targets: np.ndarray

    def __post_init__(self):
        dm = np.atleast_2d(np.asarray(self.model_inputs, dtype=float))
        ym = np.atleast_1d(np.asarray(self.model_targets, dtype=float))
        dp = np.atleast_2d(np.asarray(self.plant_inputs, dtype=float))
        yp = np.atleast_1d(np.asarray(self.plant_targets, dtype=float))
        object.__setattr__(self, "model_inputs", dm)
        object.__setattr__(self, "model_targets", ym)
        object.__setattr__(self, "plant_inputs", dp)
        object.__setattr__(self, "plant_targets", yp)
        if dm.shape[0] != ym.size or dp.shape[0] != yp.size:
            raise ValueError("input/target counts differ")
        if dm.shape[1] != dp.shape[1]:
            raise ValueError("fidelity levels have different input dimensions")
        self.validate_nested()

    def validate_nested(self) -> None:
        """Check D_plant is a subset of D_model (bit equality) with no
        duplicate plant rows."""
        seen = {row.tobytes() for row in self.model_inputs}
        plant_rows = [row.tobytes() for row in self.plant_inputs]
        missing = [i for i, key in enumerate(plant_rows) if key not in seen]
        if missing:
            raise ValueError(f"plant rows {missing} missing from model design")
        if len(set(plant_rows)) != len(plant_rows):
            raise ValueError("duplicate rows in plant design")

    @property
    def n_plant(self) -> int:
        return self.plant_targets.size


@dataclass(frozen=True)
class MultiFidelitySurrogate:
    """Fitted two-level surrogate: low-fidelity GP, discrepancy GP, scaling."""

    low_gp: Optional[GaussianProcess]
    delta_gp: GaussianProcess
    epsilon: float
    design: NestedDesign

    def posterior(self, u: np.ndarray) -> Posterior:
        return mf_posterior(self, u)


def neighborhood_box(
    center: np.ndarray, radius: float, domain: BoxDomain, inflation: float = 0.2
) -> BoxDomain:
    """Trust-region box inflated by ``inflation`` then clipped to the domain.

    The simulation design is refreshed inside this neighborhood each
    iteration; the inflation keeps some support just outside the region the
    next step is restricted to.
    """
    r = radius * (1.0 + inflation)
    lo = np.maximum(np.asarray(center, dtype=float) - r, domain.lower)
    hi = np.minimum(np.asarray(center, dtype=float) + r, domain.upper)
    return BoxDomain(lo, hi)


def build_nested_design(
    plant_inputs: np.ndarray,
    plant_targets: np.ndarray,
    n_extra: int,
    region: BoxDomain,
    model_evaluator: Callable[[np.ndarray], float],
    rng: Optional[np.random.Generator] = None,
    domain: Optional[BoxDomain] = None,
) -> NestedDesign:
    """Assemble a nested design with fresh simulations inside ``region``.

    The model design is the plant design plus ``n_extra`` uniform-random
    points in ``region`` (intersected with ``domain`` when given); the model
    is evaluated once per model-design row. A failed evaluation at an extra
    point drops that point with a warning; failure at a plant point is a
    hard error because nestedness would be lost.
    """
    if n_extra < 0:
        raise ValueError("n_extra must be nonnegative")
    if n_extra > 0 and rng is None:
        raise ValueError("rng is required when n_extra > 0")
    plant_inputs = np.atleast_2d(np.asarray(plant_inputs, dtype=float))
    box = region if domain is None else region.intersect(domain)
    extras = box.sample(rng, n_extra) if n_extra > 0 else np.empty((0, plant_inputs.shape[1]))

    rows = [plant_inputs, extras]
    model_inputs = np.vstack(rows)
    targets = []
    keep = []
    n_plant = plant_inputs.shape[0]
    for i, row in enumerate(model_inputs):
        try:
            targets.append(float(model_evaluator(row)))
            keep.append(i)
        except Exception as exc:
            if i < n_plant:
                raise ModelEvaluationFailed(
                    f"model failed at plant design row {i}: {exc}"
                ) from exc
            logger.warning("dropping failed model sample at extra point %d: %s", i, exc)
    model_inputs = model_inputs[keep]
    return NestedDesign(model_inputs, np.array(targets), plant_inputs, plant_targets)


def _stage2_nll_fn(
    family: KernelFamily,
    z_inputs: np.ndarray,
    plant_targets: np.ndarray,
    low_means: np.ndarray,
    target_scale: float,
):
    """Negative log-likelihood of the plant data as a function of
    [log lengthscales, log signal, log noise, eps]."""
    n, dim = z_inputs.shape
    diff = z_inputs[:, None, :] - z_inputs[None, :, :]
    diff2 = diff * diff
    eye = np.eye(n)
    y = plant_targets / target_scale
    m = low_means / target_scale

    def nll(x: np.ndarray) -> float:
        inv_l2 = np.exp(-2.0 * x[:dim])
        signal = math.exp(x[dim])
        noise = math.exp(x[dim + 1])
        eps = x[dim + 2]
        resid = y - eps * m
        resid = resid - resid.mean()  # constant prior mean of delta
        sq = diff2 @ inv_l2
        gram = kernel_from_sqdist(family, sq, signal)
        try:
            fact = factor_psd(gram + noise * eye)
        except NotPositiveDefinite:
            return 1e300
        alpha = solve_psd(fact, resid)
        val = 0.5 * float(resid @ alpha) + 0.5 * fact.log_det + 0.5 * n * LOG_2PI
        return val if np.isfinite(val) else 1e300

    return nll


def fit_multifidelity(
    design: NestedDesign,
    kernel_family: KernelFamily = KernelFamily.MATERN32,
    rng: Optional[np.random.Generator] = None,
    epsilon: Optional[float] = None,
    n_restarts: int = 10,
    budget: int = 400,
) -> MultiFidelitySurrogate:
    """Two-stage fit of the autoregressive surrogate.

    Stage 1 fits the low-fidelity GP on the simulation data with its noise
    pinned to the deterministic floor. Stage 2 maximizes the likelihood of
    the plant data over the discrepancy GP's hyperparameters and the scaling
    constant jointly; passing ``epsilon`` pins the scaling instead (0 yields
    a plant-only surrogate).
    """
    if design.n_plant < 2:
        raise ValueError("need at least 2 plant points")
    low_gp = fit_gp(
        design.model_inputs,
        design.model_targets,
        kernel_family,
        n_restarts,
        rng,
        noise_variance=LOW_FIDELITY_NOISE,
        budget=budget,
    )
    low_means, _ = posterior_many(low_gp, design.plant_inputs)

    if epsilon is not None:
        resid = design.plant_targets - epsilon * low_means
        delta_gp = fit_gp(
            design.plant_inputs, resid, kernel_family, n_restarts, rng, budget=budget
        )
        return MultiFidelitySurrogate(low_gp, delta_gp, float(epsilon), design)

    in_t = standardizer_fit(design.plant_inputs)
    z_in = in_t.apply(design.plant_inputs)
    y_scale = float(design.plant_targets.std())
    if y_scale == 0.0:
        y_scale = 1.0

    nll = _stage2_nll_fn(kernel_family, z_in, design.plant_targets, low_means, y_scale)
    dim = z_in.shape[1]
    hyper = _hyper_domain(dim, fit_noise=True)
    domain = BoxDomain(
        np.append(hyper.lower, EPSILON_BOUNDS[0]),
        np.append(hyper.upper, EPSILON_BOUNDS[1]),
    )
    start = np.append(_hyper_start(dim, fit_noise=True), 1.0)
    best, _ = multistart_minimize(nll, domain, n_restarts, budget, rng, incumbent=start)

    eps_hat = float(best[dim + 2])
    kernel = KernelSpec(kernel_family, math.exp(best[dim]), np.exp(best[:dim]))
    noise = math.exp(best[dim + 1])
    resid = design.plant_targets - eps_hat * low_means
    out_t = Standardizer(np.array([0.0]), np.array([y_scale]))
    mu_delta = float((resid / y_scale).mean())
    delta_gp = GaussianProcess.from_data(
        kernel, noise, mu_delta, design.plant_inputs, resid, in_t, out_t
    )
    return MultiFidelitySurrogate(low_gp, delta_gp, eps_hat, design)


def mf_posterior(s: MultiFidelitySurrogate, u: np.ndarray) -> Posterior:
    """Combined posterior at one point (clamped at zero variance)."""
    d = posterior(s.delta_gp, u)
    if s.epsilon == 0.0 or s.low_gp is None:
        return d
    low = posterior(s.low_gp, u)
    mean = s.epsilon * low.mean + d.mean
    var = s.epsilon * s.epsilon * low.variance + d.variance
    return Posterior(mean, max(var, 0.0))


def mf_posterior_many(
    s: MultiFidelitySurrogate, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized combined posterior over rows of ``points``."""
    d_mean, d_var = posterior_many(s.delta_gp, points)
    if s.epsilon == 0.0 or s.low_gp is None:
        return d_mean, d_var
    l_mean, l_var = posterior_many(s.low_gp, points)
    return (
        s.epsilon * l_mean + d_mean,
        np.maximum(s.epsilon * s.epsilon * l_var + d_var, 0.0),
    )
