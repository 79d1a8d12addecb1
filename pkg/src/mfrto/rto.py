"""Trust-region real-time optimization loop over multi-fidelity surrogates.

Each iteration: solve the acquisition subproblem inside the trust region
subject to backed-off constraints, measure the plant at the proposed point,
accept or reject the step from the merit ratio (measured cost reduction over
surrogate-predicted reduction), adapt the radius, append the measurement,
regenerate the simulation design in the trust-region neighborhood, and refit
all surrogates.

All trust-region geometry lives in normalized input units (the physical
domain is mapped onto the unit box), so a single scalar radius is meaningful
for inputs of very different magnitudes. The infinity norm is used for the
step bound, so the trust region composes with the input bounds into one box.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .chance import RiskSpec
from .errors import EvaluationFailed, ModelEvaluationFailed
from .gp import (
    GaussianProcess,
    KernelFamily,
    Posterior,
    fit_gp,
    kernel_from_sqdist,
)
from .multifidelity import (
    MultiFidelitySurrogate,
    NestedDesign,
    fit_multifidelity,
    neighborhood_box,
)
from .numerics import BoxDomain, inverse_from_factor, multistart_minimize

FULL_DOMAIN_RADIUS = math.inf  # sentinel radius when the trust region is off
_BOUNDARY_SLACK = 1e-6
_MERIT_DENOM_FLOOR = 1e-12


class AcquisitionKind(enum.Enum):
    EXPECTED_IMPROVEMENT = "ei"
    LOWER_CONFIDENCE_BOUND = "lcb"


@dataclass(frozen=True)
class AcquisitionSpec:
    """Acquisition over the cost posterior, expressed as a minimization.

    ``incumbent_best`` (expected improvement only) is the best measured
    feasible plant cost; the RTO loop refreshes it every iteration.
    """

    kind: AcquisitionKind = AcquisitionKind.EXPECTED_IMPROVEMENT
    beta: float = 2.0
    incumbent_best: float = 0.0

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")


def acquisition_value(spec: AcquisitionSpec, post: Posterior) -> float:
    """Scalarized exploration value at a point (lower is better)."""
    if spec.kind is AcquisitionKind.LOWER_CONFIDENCE_BOUND:
        return post.mean - spec.beta * math.sqrt(max(post.variance, 0.0))
    gap = spec.incumbent_best - post.mean
    if post.variance <= 0.0:
        return -max(gap, 0.0)
    sd = math.sqrt(post.variance)
    z = gap / sd
    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return -(gap * cdf + sd * pdf)


@dataclass(frozen=True)
class TrustRegionState:
    """Incumbent operating point and radius with the adaptation parameters."""

    center: np.ndarray  # normalized units
    radius: float
    delta_max: float
    eta1: float = 0.2
    eta2: float = 0.8
    gamma_red: float = 0.5
    gamma_inc: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not 0.0 < self.radius <= self.delta_max:
            raise ValueError(f"radius {self.radius} outside (0, {self.delta_max}]")
        if not 0.0 < self.eta1 < self.eta2 < 1.0:
            raise ValueError("need 0 < eta1 < eta2 < 1")
        if not 0.0 < self.gamma_red < 1.0 < self.gamma_inc:
            raise ValueError("need 0 < gamma_red < 1 < gamma_inc")


@dataclass(frozen=True)
class RtoConfig:
    """Scheme configuration including the ablation switches.

    Disabling ``use_chance_constraints`` enforces constraints on the
    posterior mean only; disabling ``use_trust_region`` opens the step region
    to the whole domain and freezes the radius at the full-domain sentinel;
    disabling ``use_prior_model`` drops the low-fidelity stage so only plant
    data informs the surrogate (model-free operation).
    """

    risk: RiskSpec
    acquisition: AcquisitionSpec = AcquisitionSpec()
    n_starts: int = 20
    n_model_points: int = 30
    max_iterations: int = 30
    use_trust_region: bool = True
    use_chance_constraints: bool = True
    use_prior_model: bool = True
    kernel_family: KernelFamily = KernelFamily.MATERN32
    fit_restarts: int = 10
    fit_budget: int = 400
    subproblem_budget: int = 400
    delta_max: float = 1.0
    eta1: float = 0.2
    eta2: float = 0.8
    gamma_red: float = 0.5
    gamma_inc: float = 2.0
    feasibility_tol: float = 1e-6
    penalty_schedule: tuple[float, ...] = (1e2, 1e4, 1e6)

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.n_model_points < 0:
            raise ValueError("n_model_points must be >= 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True)
class RtoProblem:
    """Plant/model evaluator pair over a common box domain.

    ``plant(u, rng) -> (cost, constraints)`` is the expensive noisy source;
    ``model(u) -> (cost, constraints)`` the cheap deterministic one. The
    optional ``model_batch``/``plant_batch`` evaluate many inputs at once
    (same outputs, vectorized); callers use them when present.
    """

    domain: BoxDomain
    n_constraints: int
    plant: Callable[[np.ndarray, np.random.Generator], tuple[float, np.ndarray]]
    model: Callable[[np.ndarray], tuple[float, np.ndarray]]
    model_batch: Optional[Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = None
    plant_batch: Optional[
        Callable[[np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray]]
    ] = None
    name: str = ""
    true_optimum: Optional[np.ndarray] = None
    true_cost: Optional[float] = None


@dataclass(frozen=True)
class ExperimentRecord:
    """Per-iteration log entry of the RTO loop.

    ``step`` and ``radius`` are in normalized input units; the evaluated
    point is in raw units. ``merit`` is None when the iteration skipped the
    ratio logic (infeasible subproblem or failed plant evaluation).
    """

    iteration: int
    subproblem_feasible: bool
    step: Optional[np.ndarray]
    evaluated_point: Optional[np.ndarray]
    measured_cost: Optional[float]
    measured_constraints: Optional[np.ndarray]
    merit: Optional[float]
    accepted: bool
    radius: float
    violations: Optional[np.ndarray]
    plant_failed: bool
    best_feasible_cost: float
    center: np.ndarray
    wall_time: float


def merit_ratio(
    measured_prev: float,
    measured_new: float,
    predicted_prev: float,
    predicted_new: float,
) -> float:
    """Actual over predicted cost reduction; 0 when the surrogate predicts
    (numerically) no improvement, which routes to the rejection path."""
    denom = predicted_prev - predicted_new
    if abs(denom) < _MERIT_DENOM_FLOOR:
        return 0.0
    return (measured_prev - measured_new) / denom


def update_trust_region(
    state: TrustRegionState,
    rho: float,
    d: Optional[np.ndarray],
    subproblem_feasible: bool,
    measured_constraints: Optional[np.ndarray],
) -> tuple[TrustRegionState, bool]:
    """One accept/reject and radius-adaptation decision.

    Infeasibility (of the subproblem, or of any measured constraint) rejects
    and shrinks regardless of the ratio. Otherwise: a good ratio with a step
    on the trust-region boundary expands (capped), a poor ratio shrinks and
    rejects, and anything in between accepts with the radius unchanged.
    """
    infeasible_measurement = measured_constraints is not None and bool(
        np.any(np.asarray(measured_constraints) > 0.0)
    )
    if not subproblem_feasible or infeasible_measurement:
        return replace(state, radius=state.gamma_red * state.radius), False

    step = np.asarray(d, dtype=float)
    hit_boundary = (
        np.max(np.abs(step)) >= state.radius * (1.0 - _BOUNDARY_SLACK)
        if np.isfinite(state.radius)
        else False
    )
    if rho > state.eta2 and hit_boundary:
        new_radius = min(state.gamma_inc * state.radius, state.delta_max)
        return replace(state, radius=new_radius, center=state.center + step), True
    if rho < state.eta1:
        return replace(state, radius=state.gamma_red * state.radius), False
    return replace(state, center=state.center + step), True


class _GpStack:
    """Batched posterior evaluation for GPs sharing raw training inputs.

    Precomputes per-output tensors once per fit so a single prediction for
    all outputs costs two small einsums; validated against the per-GP
    posterior path in the test-suite.
    """

    def __init__(self, gps: Sequence[GaussianProcess]):
        first = gps[0]
        self.family = first.kernel.family
        if any(g.kernel.family is not self.family for g in gps):
            raise ValueError("stacked GPs must share a kernel family")
        if any(g.z_inputs.shape != first.z_inputs.shape for g in gps):
            raise ValueError("stacked GPs must share training inputs")
        self.in_shift = np.stack([g.input_transform.shift for g in gps])  # (G, d)
        self.in_scale = np.stack([g.input_transform.scale for g in gps])
        self.raw_inputs = first.training_inputs  # (N, d), shared
        self.z_inputs = np.stack([g.z_inputs for g in gps])  # (G, N, d)
        self.inv_l2 = np.stack([g.kernel.lengthscales ** -2.0 for g in gps])  # (G, d)
        self.signal = np.array([g.kernel.signal_variance for g in gps])
        self.alpha = np.stack([g.alpha for g in gps])  # (G, N)
        self.k_inv = np.stack([inverse_from_factor(g.gram_factorization) for g in gps])
        self.prior_mean = np.array([g.prior_mean for g in gps])
        self.out_scale = np.array([g.target_transform.scale[0] for g in gps])
        self.out_shift = np.array([g.target_transform.shift[0] for g in gps])

    def predict(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Means and variances of all stacked outputs at one raw point."""
        z = (u[None, :] - self.in_shift) / self.in_scale  # (G, d)
        diff = self.z_inputs - z[:, None, :]  # (G, N, d)
        sq = np.einsum("gnd,gd->gn", diff * diff, self.inv_l2)
        k_star = kernel_from_sqdist(self.family, sq, 1.0) * self.signal[:, None]
        means = np.einsum("gn,gn->g", k_star, self.alpha) + self.prior_mean
        tmp = np.einsum("gnm,gm->gn", self.k_inv, k_star)
        variances = np.maximum(self.signal - np.einsum("gn,gn->g", k_star, tmp), 0.0)
        return (
            means * self.out_scale + self.out_shift,
            variances * self.out_scale**2,
        )


class SurrogateBundle:
    """All per-output surrogates of one iteration, evaluated together."""

    def __init__(self, surrogates: Sequence):
        self.surrogates = list(surrogates)
        if all(isinstance(s, MultiFidelitySurrogate) for s in surrogates):
            self.epsilon = np.array([s.epsilon for s in surrogates])
            lows = [s.low_gp for s in surrogates]
            self.low = _GpStack(lows) if all(g is not None for g in lows) else None
            self.delta = _GpStack([s.delta_gp for s in surrogates])
        elif all(isinstance(s, GaussianProcess) for s in surrogates):
            self.epsilon = None
            self.low = None
            self.delta = _GpStack(surrogates)
        else:
            raise ValueError("mixed surrogate types in one bundle")

    def predict(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        means, variances = self.delta.predict(u)
        if self.low is not None:
            l_means, l_vars = self.low.predict(u)
            means = means + self.epsilon * l_means
            variances = variances + self.epsilon**2 * l_vars
        return means, variances


def solve_subproblem(
    surrogates: Sequence,
    state: TrustRegionState,
    config: RtoConfig,
    domain: BoxDomain,
    rng: np.random.Generator,
) -> Optional[np.ndarray]:
    """Minimize the cost acquisition inside the trust region subject to
    backed-off constraints.

    ``surrogates[0]`` models the cost, the rest one constraint each. Returns
    the step from the trust-region center, or None when no evaluated point
    satisfied every backed-off constraint within tolerance (a normal outcome
    handled by the caller, not an error).

    Constraint handling is by exact penalty with an escalating weight; the
    point returned is always the best *feasible* point seen, so the
    feasibility tolerance holds for every returned step by construction.
    """
    bundle = surrogates if hasattr(surrogates, "predict") else SurrogateBundle(surrogates)
    center = state.center
    if np.isfinite(state.radius):
        box = BoxDomain(
            np.maximum(center - state.radius, domain.lower),
            np.minimum(center + state.radius, domain.upper),
        )
    else:
        box = domain
    r_backoff = config.risk.multiplier if config.use_chance_constraints else 0.0
    acq_spec = config.acquisition
    tol = config.feasibility_tol

    best: dict = {"x": None, "f": math.inf}

    def make_objective(weight: float):
        def objective(u: np.ndarray) -> float:
            means, variances = bundle.predict(u)
            acq = acquisition_value(acq_spec, Posterior(means[0], max(variances[0], 0.0)))
            if means.size > 1:
                backed = means[1:] + r_backoff * np.sqrt(np.maximum(variances[1:], 0.0))
                worst = float(np.max(backed))
                penalty = float(np.sum(np.maximum(backed, 0.0)))
            else:
                worst, penalty = -math.inf, 0.0
            if worst <= tol and acq < best["f"]:
                best["x"] = u.copy()
                best["f"] = acq
            return acq + weight * penalty

        return objective

    for weight in config.penalty_schedule:
        multistart_minimize(
            make_objective(weight),
            box,
            config.n_starts,
            config.subproblem_budget,
            rng,
            incumbent=box.clip(center),
        )
        if best["x"] is not None:
            break
    if best["x"] is None:
        return None
    return best["x"] - center


def _normalizer(domain: BoxDomain):
    width = np.where(domain.width > 0.0, domain.width, 1.0)

    def norm(u: np.ndarray) -> np.ndarray:
        return (np.asarray(u, dtype=float) - domain.lower) / width

    def denorm(z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * width + domain.lower

    return norm, denorm


def _incumbent_best(costs: np.ndarray, constraints: np.ndarray) -> float:
    """Best measured feasible cost; falls back to the least-violating
    point's cost before any feasible measurement exists."""
    feasible = np.all(constraints <= 0.0, axis=1)
    if np.any(feasible):
        return float(np.min(costs[feasible]))
    worst = np.max(constraints, axis=1)
    return float(costs[int(np.argmin(worst))])


def _dedup(point: np.ndarray, existing: set, interior: np.ndarray) -> np.ndarray:
    """Nudge a proposed point off any bit-identical existing design row.

    The perturbation is ~1e-9 of the normalized range (physically
    meaningless) and moves toward the domain interior so box membership and
    the trust-region bound (within its documented slack) are preserved.
    """
    p = point.copy()
    scale = 1e-9
    while p.tobytes() in existing:
        q = p + scale * (interior - p)
        if np.array_equal(q, p):
            q = p + scale
        p = q
        scale *= 4.0
    return p


def _fit_surrogates(
    problem: RtoProblem,
    config: RtoConfig,
    plant_inputs_n: np.ndarray,
    plant_outputs: np.ndarray,
    state: TrustRegionState,
    unit: BoxDomain,
    denorm,
    rng: np.random.Generator,
    model_cache: dict,
) -> SurrogateBundle:
    """Steps I-II / 7-8: regenerate the nested design and refit all outputs."""
    n_out = plant_outputs.shape[1]
    if not config.use_prior_model:
        gps = [
            fit_gp(
                plant_inputs_n,
                plant_outputs[:, i],
                config.kernel_family,
                config.fit_restarts,
                rng,
                budget=config.fit_budget,
            )
            for i in range(n_out)
        ]
        return SurrogateBundle(gps)

    region = neighborhood_box(state.center, state.radius, unit)
    extras = region.sample(rng, config.n_model_points) if config.n_model_points else np.empty(
        (0, plant_inputs_n.shape[1])
    )
    model_inputs_n = np.vstack([plant_inputs_n, extras])

    # Model sims are deterministic, so values at persisting plant rows are
    # reused across iterations instead of re-simulated.
    missing = [
        i for i, row in enumerate(model_inputs_n) if row.tobytes() not in model_cache
    ]
    if missing:
        rows = model_inputs_n[missing]
        if problem.model_batch is not None:
            costs_b, cons_b = problem.model_batch(denorm(rows))
            fresh = np.column_stack([costs_b, cons_b])
            bad = ~np.all(np.isfinite(fresh), axis=1)
        else:
            fresh = np.full((len(rows), n_out), np.nan)
            bad = np.zeros(len(rows), dtype=bool)
            for j, row in enumerate(rows):
                try:
                    c, g = problem.model(denorm(row))
                    fresh[j] = np.concatenate([[c], np.asarray(g, dtype=float)])
                except EvaluationFailed:
                    bad[j] = True
        for j, i in enumerate(missing):
            if not bad[j]:
                model_cache[model_inputs_n[i].tobytes()] = fresh[j]

    keep, model_values = [], []
    n_plant = plant_inputs_n.shape[0]
    for i, row in enumerate(model_inputs_n):
        vals = model_cache.get(row.tobytes())
        if vals is None:
            if i < n_plant:
                raise ModelEvaluationFailed(f"model failed at plant design row {i}")
            continue
        keep.append(i)
        model_values.append(vals)
    model_inputs_n = model_inputs_n[keep]
    model_values = np.asarray(model_values)

    surrogates = []
    for i in range(n_out):
        design = NestedDesign(
            model_inputs_n, model_values[:, i], plant_inputs_n, plant_outputs[:, i]
        )
        surrogates.append(
            fit_multifidelity(
                design,
                config.kernel_family,
                rng,
                n_restarts=config.fit_restarts,
                budget=config.fit_budget,
            )
        )
    return SurrogateBundle(surrogates)


def run_rto(
    problem: RtoProblem,
    config: RtoConfig,
    initial_inputs: np.ndarray,
    initial_costs: np.ndarray,
    initial_constraints: np.ndarray,
    u0: np.ndarray,
    delta0: float,
    rng: np.random.Generator,
) -> list[ExperimentRecord]:
    """Run the full RTO loop and return the per-iteration records.

    ``initial_inputs`` are raw plant operating points with their measured
    costs/constraints; ``u0`` must be one of them (its stored measurement
    seeds the merit ratio). ``delta0`` is the initial radius in normalized
    units. All randomness flows through ``rng``, so identical seeds and
    configuration reproduce the records bit-for-bit.
    """
    norm, denorm = _normalizer(problem.domain)
    unit = BoxDomain(np.zeros(problem.domain.dim), np.ones(problem.domain.dim))
    initial_inputs = np.atleast_2d(np.asarray(initial_inputs, dtype=float))
    if initial_inputs.shape[0] == 0:
        raise ValueError("initial plant dataset must be nonempty")
    plant_inputs_n = norm(initial_inputs)
    costs = np.asarray(initial_costs, dtype=float).copy()
    constraints = np.atleast_2d(np.asarray(initial_constraints, dtype=float)).copy()
    plant_outputs = np.column_stack([costs, constraints])

    u0 = np.asarray(u0, dtype=float)
    center_n = norm(u0)
    matches = np.where(np.all(plant_inputs_n == center_n, axis=1))[0]
    if matches.size == 0:
        raise ValueError("u0 must be one of the initial measured points")
    incumbent_cost = float(costs[matches[0]])

    if config.use_trust_region:
        radius = min(float(delta0), config.delta_max)
        delta_max = config.delta_max
    else:
        radius = FULL_DOMAIN_RADIUS
        delta_max = FULL_DOMAIN_RADIUS
    state = TrustRegionState(
        center_n,
        radius,
        delta_max,
        eta1=config.eta1,
        eta2=config.eta2,
        gamma_red=config.gamma_red,
        gamma_inc=config.gamma_inc,
    )

    model_cache: dict = {}
    bundle = _fit_surrogates(
        problem, config, plant_inputs_n, plant_outputs, state, unit, denorm, rng, model_cache
    )
    existing_rows = {row.tobytes() for row in plant_inputs_n}
    records: list[ExperimentRecord] = []

    for k in range(config.max_iterations):
        tick = time.perf_counter()
        acq = replace(
            config.acquisition,
            incumbent_best=_incumbent_best(plant_outputs[:, 0], plant_outputs[:, 1:]),
        )
        iter_config = replace(config, acquisition=acq)
        d = solve_subproblem(bundle, state, iter_config, unit, rng)

        step = None
        point_raw = None
        cost = None
        cons = None
        rho = None
        violations = None
        plant_failed = False

        if d is None:
            state, accepted = update_trust_region(state, 0.0, None, False, None)
        else:
            point_n = unit.clip(state.center + d)
            point_n = _dedup(point_n, existing_rows, np.full(unit.dim, 0.5))
            step = point_n - state.center
            point_raw = denorm(point_n)
            try:
                cost_f, cons_arr = problem.plant(point_raw, rng)
                cost = float(cost_f)
                cons = np.asarray(cons_arr, dtype=float)
            except EvaluationFailed:
                plant_failed = True
                state, accepted = update_trust_region(state, 0.0, None, False, None)
            else:
                pred_prev, _ = bundle.predict(state.center)
                pred_new, _ = bundle.predict(point_n)
                rho = merit_ratio(incumbent_cost, cost, pred_prev[0], pred_new[0])
                violations = cons > 0.0
                state, accepted = update_trust_region(state, rho, step, True, cons)
                if accepted:
                    incumbent_cost = cost
                plant_inputs_n = np.vstack([plant_inputs_n, point_n])
                plant_outputs = np.vstack(
                    [plant_outputs, np.concatenate([[cost], cons])]
                )
                existing_rows.add(point_n.tobytes())

        bundle = _fit_surrogates(
            problem, config, plant_inputs_n, plant_outputs, state, unit, denorm, rng, model_cache
        )
        records.append(
            ExperimentRecord(
                iteration=k,
                subproblem_feasible=d is not None,
                step=step,
                evaluated_point=point_raw,
                measured_cost=cost,
                measured_constraints=cons,
                merit=rho,
                accepted=accepted,
                radius=state.radius,
                violations=violations,
                plant_failed=plant_failed,
                best_feasible_cost=_incumbent_best(
                    plant_outputs[:, 0], plant_outputs[:, 1:]
                ),
                center=denorm(state.center),
                wall_time=time.perf_counter() - tick,
            )
        )
    return records
