"""Fixed-step explicit Runge-Kutta integration with staged (piecewise-constant)
inputs.

A classical 4th-order scheme with a fixed fine step is used instead of an
adaptive solver: the process dynamics handled here are non-stiff, and a fixed
step makes trajectories bit-reproducible across runs, which the experiment
harness relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import DimensionMismatch, NonFiniteState

DEFAULT_STEP = 0.05  # hours


@dataclass(frozen=True)
class PiecewiseConstantSchedule:
    """Staged inputs: ``values[j]`` applies on ``[edges[j], edges[j+1])``.

    The final stage is closed on the right so the schedule covers the full
    horizon ``[edges[0], edges[-1]]``.
    """

    edges: np.ndarray  # (n_stages + 1,), strictly increasing
    values: np.ndarray  # (n_stages, n_inputs)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if edges.ndim != 1 or edges.size != values.shape[0] + 1:
            raise DimensionMismatch(
                f"{edges.size} edges incompatible with {values.shape[0]} stages"
            )
        if np.any(np.diff(edges) <= 0):
            raise ValueError("stage edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    @property
    def n_stages(self) -> int:
        return self.values.shape[0]

    def stage_index(self, t: float) -> int:
        idx = int(np.searchsorted(self.edges, t, side="right")) - 1
        return min(max(idx, 0), self.n_stages - 1)

    def inputs_at(self, t: float) -> np.ndarray:
        return self.values[self.stage_index(t)]


@dataclass(frozen=True)
class OdeTrajectory:
    """Solution sampled on the requested output grid (one state row per time)."""

    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, n_states)


def _segment_points(t_grid: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Union of output times and stage edges spanning the grid, sorted."""
    inner = edges[(edges > t_grid[0]) & (edges < t_grid[-1])]
    return np.unique(np.concatenate([t_grid, inner]))


def integrate_ode(
    rhs: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    schedule: PiecewiseConstantSchedule,
    t_grid: np.ndarray,
    max_step: float = DEFAULT_STEP,
) -> OdeTrajectory:
    """Integrate ``dx/dt = rhs(t, x, inputs)`` over ``t_grid``.

    Inputs are held constant within each schedule stage. Each segment between
    consecutive output/stage boundaries is covered with equal sub-steps no
    longer than ``max_step``, so boundaries are always hit exactly.

    Raises
    ------
    NonFiniteState
        If the state leaves the finite range (integration blow-up).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be an increasing vector with >= 2 points")
    if schedule.edges[0] > t_grid[0] + 1e-12 or schedule.edges[-1] < t_grid[-1] - 1e-12:
        raise ValueError("schedule does not cover the integration horizon")
    if max_step <= 0:
        raise ValueError("max_step must be positive")

    x = np.array(x0, dtype=float)
    points = _segment_points(t_grid, schedule.edges)
    out = np.empty((t_grid.size, x.size))
    out_idx = {float(t): i for i, t in enumerate(t_grid)}
    if float(points[0]) in out_idx:
        out[out_idx[float(points[0])]] = x

    for a, b in zip(points[:-1], points[1:]):
        inputs = schedule.inputs_at(0.5 * (a + b))
        n_sub = max(int(np.ceil((b - a) / max_step - 1e-12)), 1)
        h = (b - a) / n_sub
        t = a
        for _ in range(n_sub):
            k1 = rhs(t, x, inputs)
            k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1, inputs)
            k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2, inputs)
            k4 = rhs(t + h, x + h * k3, inputs)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"state non-finite at t={b}")
        if float(b) in out_idx:
            out[out_idx[float(b)]] = x

    return OdeTrajectory(t_grid.copy(), out)


def integrate_ode_batch(
    rhs: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    edges: np.ndarray,
    stage_values: np.ndarray,
    t_grid: np.ndarray,
    max_step: float = DEFAULT_STEP,
) -> np.ndarray:
    """Integrate many trajectories in lock-step (shared stage edges and grid).

    Parameters
    ----------
    rhs : broadcasting derivative, maps (t, states (B, n), inputs (B, m)) to
        (B, n).
    x0 : (B, n) initial states, or (n,) broadcast to all trajectories.
    edges : shared stage edges, (n_stages + 1,).
    stage_values : per-trajectory stage inputs, (B, n_stages, m).
    t_grid : shared output times.

    Returns
    -------
    (T, B, n) array of states; rows of non-finite trajectories are left as
    NaN for the caller to detect (a single blown-up member must not abort
    the whole batch).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    stage_values = np.asarray(stage_values, dtype=float)
    edges = np.asarray(edges, dtype=float)
    batch = stage_values.shape[0]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (batch, np.shape(x0)[-1])).copy()

    points = _segment_points(t_grid, edges)
    out = np.full((t_grid.size, batch, x.shape[1]), np.nan)
    out_idx = {float(t): i for i, t in enumerate(t_grid)}
    if float(points[0]) in out_idx:
        out[out_idx[float(points[0])]] = x

    n_stages = stage_values.shape[1]
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        for a, b in zip(points[:-1], points[1:]):
            stage = min(
                max(int(np.searchsorted(edges, 0.5 * (a + b), side="right")) - 1, 0),
                n_stages - 1,
            )
            inputs = stage_values[:, stage, :]
            n_sub = max(int(np.ceil((b - a) / max_step - 1e-12)), 1)
            h = (b - a) / n_sub
            t = a
            for _ in range(n_sub):
                k1 = rhs(t, x, inputs)
                k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1, inputs)
                k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2, inputs)
                k4 = rhs(t + h, x + h * k3, inputs)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                t += h
            if float(b) in out_idx:
                out[out_idx[float(b)]] = x
    return out
