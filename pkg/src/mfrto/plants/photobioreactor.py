"""Simulated photobioreactor: phycocyanin production by cyanobacteria.

States: biomass C_X [g/L], nitrate C_N [mg/L], phycocyanin C_P [mg/L].
Inputs: light intensity I [uE m-2 s-1] and nitrate inflow F_N [mg L-1 h-1],
piecewise-constant over 6 stages of 40 h (12 degrees of freedom per batch).

Two simulators are provided: the "plant" (ground truth, optionally measured
with noise) whose growth and production kinetics include photoinhibition
terms I/(I + k + I^2/k_inh), and the "model" (cheap, deterministic, used as
the low-fidelity source) with saturation-only kinetics I/(I + k) and a
nitrate Monod factor on production -- a structural mismatch, not merely a
parametric one.

Kinetic parameter values are not hard-coded: they load from a YAML file
transcribed from the published source (see ``pbr_params.yaml`` for the
transcription checklist), so they can be swapped without touching code.

The batch objective is the end-batch phycocyanin concentration (maximized,
so the cost is -C_P(240)); constraints cap the phycocyanin-to-biomass ratio
at 1.1 wt% and nitrate at 800 mg/L, enforced at the six stage endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..errors import ConfigError, EvaluationFailed, NonFiniteState
from ..numerics import (
    DEFAULT_STEP,
    BoxDomain,
    OdeTrajectory,
    PiecewiseConstantSchedule,
    integrate_ode,
    integrate_ode_batch,
)
from ..rto import RtoProblem

BATCH_HOURS = 240.0
N_STAGES = 6
STAGE_EDGES = np.linspace(0.0, BATCH_HOURS, N_STAGES + 1)
LIGHT_BOUNDS = (120.0, 400.0)
NITRATE_FEED_BOUNDS = (0.0, 40.0)
INITIAL_STATE = np.array([1.0, 150.0, 0.0])  # C_X, C_N, C_P
RATIO_LIMIT = 0.011  # phycocyanin-to-biomass, wt%
NITRATE_LIMIT = 800.0  # mg/L
TERMINAL_NITRATE_LIMIT = 150.0  # mg/L, optional end-batch constraint

PARAM_FIELDS = ("u_m", "u_d", "k_s", "k_i", "k_sq", "k_iq", "k_m", "k_d", "K_N", "K_Np", "Y_NX")


@dataclass(frozen=True)
class PbrParameters:
    """Kinetic parameters; units are documented in the parameter file."""

    u_m: float
    u_d: float
    k_s: float
    k_i: float
    k_sq: float
    k_iq: float
    k_m: float
    k_d: float
    K_N: float
    K_Np: float
    Y_NX: float

    def __post_init__(self):
        for name in PARAM_FIELDS:
            value = getattr(self, name)
            if name == "u_d":
                # The published specific decay rate is 0.0; everything else
                # must be strictly positive.
                if value < 0.0:
                    raise ConfigError(f"parameter {name} must be nonnegative, got {value}")
            elif value <= 0.0:
                raise ConfigError(f"parameter {name} must be positive, got {value}")


def load_pbr_parameters(path: Optional[str | Path] = None) -> PbrParameters:
    """Load and validate kinetic parameters from YAML.

    Without a path the packaged default file is used. Unknown or missing
    keys and non-numeric values are hard errors.
    """
    if path is None:
        text = resources.files("mfrto.plants").joinpath("pbr_params.yaml").read_text()
    else:
        text = Path(path).read_text()
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError("parameter file must be a mapping of name to value")
    unknown = set(raw) - set(PARAM_FIELDS)
    if unknown:
        raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
    missing = set(PARAM_FIELDS) - set(raw)
    if missing:
        raise ConfigError(f"missing parameter keys: {sorted(missing)}")
    values = {}
    for key in PARAM_FIELDS:
        try:
            values[key] = float(raw[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"parameter {key} is not numeric: {raw[key]!r}") from exc
    return PbrParameters(**values)


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise standard deviations for the three concentrations."""

    sigma_biomass: float = 0.02  # g/L
    sigma_nitrate: float = 0.316  # mg/L
    sigma_phycocyanin: float = 0.001  # mg/L
    enabled: bool = True

    def __post_init__(self):
        if min(self.sigma_biomass, self.sigma_nitrate, self.sigma_phycocyanin) < 0.0:
            raise ValueError("noise standard deviations must be nonnegative")

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_biomass, self.sigma_nitrate, self.sigma_phycocyanin])


@dataclass(frozen=True)
class ControlSchedule:
    """Six-stage piecewise-constant light and nitrate-feed profiles."""

    light: np.ndarray  # (6,) in [120, 400]
    nitrate_feed: np.ndarray  # (6,) in [0, 40]

    def __post_init__(self):
        light = np.asarray(self.light, dtype=float)
        feed = np.asarray(self.nitrate_feed, dtype=float)
        if light.shape != (N_STAGES,) or feed.shape != (N_STAGES,):
            raise ValueError(f"schedules need exactly {N_STAGES} stages")
        tol = 1e-9
        if np.any(light < LIGHT_BOUNDS[0] - tol) or np.any(light > LIGHT_BOUNDS[1] + tol):
            raise ValueError(f"light outside {LIGHT_BOUNDS}")
        if np.any(feed < NITRATE_FEED_BOUNDS[0] - tol) or np.any(
            feed > NITRATE_FEED_BOUNDS[1] + tol
        ):
            raise ValueError(f"nitrate feed outside {NITRATE_FEED_BOUNDS}")
        object.__setattr__(self, "light", np.clip(light, *LIGHT_BOUNDS))
        object.__setattr__(self, "nitrate_feed", np.clip(feed, *NITRATE_FEED_BOUNDS))

    def as_vector(self) -> np.ndarray:
        """Flatten to the 12-vector [I_1..I_6, F_1..F_6]."""
        return np.concatenate([self.light, self.nitrate_feed])

    @staticmethod
    def from_vector(u: np.ndarray) -> "ControlSchedule":
        u = np.asarray(u, dtype=float)
        if u.shape != (2 * N_STAGES,):
            raise ValueError(f"expected a {2 * N_STAGES}-vector, got shape {u.shape}")
        return ControlSchedule(u[:N_STAGES], u[N_STAGES:])

    def stage_values(self) -> np.ndarray:
        """(n_stages, 2) array of [I, F_N] rows for the integrator."""
        return np.column_stack([self.light, self.nitrate_feed])


@dataclass(frozen=True)
class BatchOutcome:
    """Cost, stage-endpoint constraint values and the noiseless trajectory."""

    cost: float  # -C_P(240), minimization convention
    constraints: np.ndarray  # ratio limits then nitrate limits, per endpoint
    trajectory: OdeTrajectory
    sampled_states: np.ndarray  # (6, 3) states used for cost/constraints


def pbr_plant_rhs(
    t: float, state: np.ndarray, inputs: np.ndarray, params: PbrParameters
) -> np.ndarray:
    """Ground-truth dynamics with photoinhibition; broadcasts over leading axes.

    States are clamped at zero before evaluating the kinetics so noise-free
    negative overshoot cannot destabilize the Monod terms.
    """
    s = np.maximum(state, 0.0)
    cx, cn, cp = s[..., 0], s[..., 1], s[..., 2]
    light, feed = inputs[..., 0], inputs[..., 1]
    light_growth = light / (light + params.k_s + light * light / params.k_i)
    monod = cn / (cn + params.K_N)
    growth = params.u_m * light_growth * monod * cx
    light_prod = light / (light + params.k_sq + light * light / params.k_iq)
    d_cx = growth - params.u_d * cx
    d_cn = -params.Y_NX * growth + feed
    d_cp = params.k_m * light_prod * cx - params.k_d * cp / (cn + params.K_Np)
    return np.stack([d_cx, d_cn, d_cp], axis=-1)


def pbr_model_rhs(
    t: float, state: np.ndarray, inputs: np.ndarray, params: PbrParameters
) -> np.ndarray:
    """Mismatched model dynamics: saturation-only light kinetics and a
    nitrate Monod factor on the production term."""
    s = np.maximum(state, 0.0)
    cx, cn, cp = s[..., 0], s[..., 1], s[..., 2]
    light, feed = inputs[..., 0], inputs[..., 1]
    light_growth = light / (light + params.k_s)
    monod = cn / (cn + params.K_N)
    growth = params.u_m * light_growth * monod * cx
    light_prod = light / (light + params.k_sq)
    d_cx = growth - params.u_d * cx
    d_cn = -params.Y_NX * growth + feed
    d_cp = params.k_m * light_prod * monod * cx - params.k_d * cp / (cn + params.K_Np)
    return np.stack([d_cx, d_cn, d_cp], axis=-1)


def _constraints_from_states(states: np.ndarray, include_terminal: bool) -> np.ndarray:
    """Stage-endpoint constraint values from a (6, 3) state matrix, <= 0 when
    satisfied.

    Layout: indices 0..5 are the ratio constraints C_P - 0.011 C_X, 6..11
    the nitrate constraints C_N - 800 (endpoint order), optionally followed
    by the end-batch nitrate constraint C_N(240) - 150.
    """
    ratio = states[:, 2] - RATIO_LIMIT * states[:, 0]
    nitrate = states[:, 1] - NITRATE_LIMIT
    parts = [ratio, nitrate]
    if include_terminal:
        parts.append(states[-1:, 1] - TERMINAL_NITRATE_LIMIT)
    return np.concatenate(parts)


def evaluate_batch(
    schedule: ControlSchedule,
    which: str = "plant",
    noise: Optional[NoiseSpec] = None,
    params: Optional[PbrParameters] = None,
    rng: Optional[np.random.Generator] = None,
    include_terminal_nitrate: bool = False,
    max_step: float = DEFAULT_STEP,
) -> BatchOutcome:
    """Simulate one 240 h batch and form cost/constraints.

    Measurement noise (plant only, when enabled) perturbs the sampled
    stage-endpoint concentrations, never the underlying trajectory, which is
    logged noiseless. Model evaluations are always noiseless.
    """
    if which not in ("plant", "model"):
        raise ValueError("which must be 'plant' or 'model'")
    params = params or load_pbr_parameters()
    noise = noise or NoiseSpec()
    rhs_fn = pbr_plant_rhs if which == "plant" else pbr_model_rhs

    def rhs(t, x, inputs):
        return rhs_fn(t, x, inputs, params)

    staged = PiecewiseConstantSchedule(STAGE_EDGES, schedule.stage_values())
    try:
        traj = integrate_ode(rhs, INITIAL_STATE, staged, STAGE_EDGES, max_step=max_step)
    except NonFiniteState as exc:
        raise EvaluationFailed(f"batch integration blew up: {exc}") from exc

    endpoint_states = traj.states[1:]  # drop t = 0
    sampled = endpoint_states.copy()
    if which == "plant" and noise.enabled:
        if rng is None:
            raise ValueError("rng is required for noisy plant evaluation")
        sampled = sampled + rng.standard_normal(sampled.shape) * noise.sigmas
    cost = -float(sampled[-1, 2])
    constraints = _constraints_from_states(sampled, include_terminal_nitrate)
    return BatchOutcome(cost, constraints, traj, sampled)


def evaluate_batches(
    schedules: np.ndarray,
    which: str = "plant",
    noise: Optional[NoiseSpec] = None,
    params: Optional[PbrParameters] = None,
    rng: Optional[np.random.Generator] = None,
    include_terminal_nitrate: bool = False,
    max_step: float = DEFAULT_STEP,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lock-step simulation of many batches (rows are 12-vectors).

    Returns (costs, constraints, ok) where ``ok`` flags trajectories that
    stayed finite; failed rows carry NaNs instead of raising.
    """
    if which not in ("plant", "model"):
        raise ValueError("which must be 'plant' or 'model'")
    params = params or load_pbr_parameters()
    noise = noise or NoiseSpec()
    u = np.atleast_2d(np.asarray(schedules, dtype=float))
    stage_values = np.stack([u[:, :N_STAGES], u[:, N_STAGES:]], axis=-1)  # (B, 6, 2)
    rhs_fn = pbr_plant_rhs if which == "plant" else pbr_model_rhs

    def rhs(t, x, inputs):
        return rhs_fn(t, x, inputs, params)

    states = integrate_ode_batch(
        rhs, INITIAL_STATE, STAGE_EDGES, stage_values, STAGE_EDGES, max_step=max_step
    )
    endpoint_states = np.swapaxes(states[1:], 0, 1)  # (B, 6, 3)
    ok = np.all(np.isfinite(endpoint_states), axis=(1, 2))
    sampled = endpoint_states.copy()
    if which == "plant" and noise.enabled:
        if rng is None:
            raise ValueError("rng is required for noisy plant evaluation")
        sampled = sampled + rng.standard_normal(sampled.shape) * noise.sigmas
    costs = -sampled[:, -1, 2]
    constraints = np.stack(
        [_constraints_from_states(s, include_terminal_nitrate) for s in sampled]
    )
    return costs, constraints, ok


def pbr_domain() -> BoxDomain:
    return BoxDomain(
        np.concatenate([np.full(N_STAGES, LIGHT_BOUNDS[0]), np.full(N_STAGES, NITRATE_FEED_BOUNDS[0])]),
        np.concatenate([np.full(N_STAGES, LIGHT_BOUNDS[1]), np.full(N_STAGES, NITRATE_FEED_BOUNDS[1])]),
    )


def pbr_problem(
    params: Optional[PbrParameters] = None,
    noise: Optional[NoiseSpec] = None,
    include_terminal_nitrate: bool = False,
) -> RtoProblem:
    """Bundle the simulators into the optimization-problem interface."""
    params = params or load_pbr_parameters()
    noise = noise or NoiseSpec()
    n_constraints = 2 * N_STAGES + (1 if include_terminal_nitrate else 0)

    def plant(u: np.ndarray, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        outcome = evaluate_batch(
            ControlSchedule.from_vector(u),
            "plant",
            noise,
            params,
            rng,
            include_terminal_nitrate,
        )
        return outcome.cost, outcome.constraints

    def model(u: np.ndarray) -> tuple[float, np.ndarray]:
        outcome = evaluate_batch(
            ControlSchedule.from_vector(u),
            "model",
            params=params,
            include_terminal_nitrate=include_terminal_nitrate,
        )
        return outcome.cost, outcome.constraints

    def model_batch(us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        costs, cons, ok = evaluate_batches(
            us, "model", params=params, include_terminal_nitrate=include_terminal_nitrate
        )
        costs = np.where(ok, costs, np.nan)
        return costs, cons

    def plant_batch(us: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        costs, cons, ok = evaluate_batches(
            us, "plant", noise, params, rng, include_terminal_nitrate
        )
        if not np.all(ok):
            raise EvaluationFailed("plant batch integration blew up")
        return costs, cons

    return RtoProblem(
        domain=pbr_domain(),
        n_constraints=n_constraints,
        plant=plant,
        model=model,
        model_batch=model_batch,
        plant_batch=plant_batch,
        name="pbr",
    )
