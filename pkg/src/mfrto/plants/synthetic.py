"""Synthetic test problems with known closed-form optima.

``synthetic_benchmark`` is a 2-D convex plant with one linear constraint and
a linear plant/model mismatch: the unconstrained minimum sits outside the
feasible halfspace, so the constrained optimum is its projection onto the
constraint boundary and both are available in closed form for assertions.

``xsinx_truth``/``xsinx_sample`` provide the 1-D motivating example: a
wiggly ground truth observed through small Gaussian noise, used to show how
confidently wrong a sparsely trained GP can be.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..numerics import BoxDomain
from ..rto import RtoProblem

XSINX_NOISE_STD = 0.01
XSINX_DOMAIN = (0.0, 12.0)

_ANCHOR = np.array([0.9, 0.7])  # unconstrained plant minimum
_CONSTRAINT_OFFSET = 1.0  # feasible halfspace u1 + u2 <= 1


def xsinx_truth(x):
    """Noise-free ground truth x * sin(x)."""
    x = np.asarray(x, dtype=float)
    return x * np.sin(x)


def xsinx_sample(x, noise_std: float = XSINX_NOISE_STD, rng: Optional[np.random.Generator] = None):
    """Noisy observation y = x sin(x) + eps, eps ~ N(0, noise_std^2)."""
    truth = xsinx_truth(x)
    if noise_std == 0.0:
        return truth
    if rng is None:
        raise ValueError("rng is required for noisy sampling")
    return truth + noise_std * rng.standard_normal(np.shape(truth))


def synthetic_true_optimum() -> tuple[np.ndarray, float]:
    """Closed-form constrained optimum of the synthetic benchmark.

    The plant cost is ||u - a||^2 with a = (0.9, 0.7) subject to
    u1 + u2 <= 1; since a violates the constraint, the optimum is the
    projection of a onto the boundary.
    """
    excess = (_ANCHOR.sum() - _CONSTRAINT_OFFSET) / 2.0
    u_star = _ANCHOR - excess
    cost = 2.0 * excess**2
    return u_star, float(cost)


def synthetic_benchmark(noise_std: float = 0.01, mismatch: float = 1.0) -> RtoProblem:
    """2-D convex benchmark with linear plant-model mismatch.

    ``mismatch`` scales the linear error added to the model's cost and
    constraint; at 0 the model equals the plant exactly. ``noise_std``
    controls the Gaussian measurement noise on plant cost and constraint.
    """
    domain = BoxDomain(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))

    def plant_true(u: np.ndarray) -> tuple[float, np.ndarray]:
        cost = float((u[0] - _ANCHOR[0]) ** 2 + (u[1] - _ANCHOR[1]) ** 2)
        g = float(u[0] + u[1] - _CONSTRAINT_OFFSET)
        return cost, np.array([g])

    def plant(u: np.ndarray, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        cost, g = plant_true(u)
        if noise_std > 0.0:
            cost += noise_std * rng.standard_normal()
            g = g + noise_std * rng.standard_normal()
        return cost, g

    def model(u: np.ndarray) -> tuple[float, np.ndarray]:
        cost, g = plant_true(u)
        cost += mismatch * (0.3 * u[0] - 0.2 * u[1] + 0.1)
        g = g + mismatch * 0.05 * (u[0] - u[1])
        return cost, g

    def model_batch(us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        us = np.atleast_2d(us)
        costs = (us[:, 0] - _ANCHOR[0]) ** 2 + (us[:, 1] - _ANCHOR[1]) ** 2
        costs = costs + mismatch * (0.3 * us[:, 0] - 0.2 * us[:, 1] + 0.1)
        g = us[:, 0] + us[:, 1] - _CONSTRAINT_OFFSET + mismatch * 0.05 * (us[:, 0] - us[:, 1])
        return costs, g[:, None]

    u_star, cost_star = synthetic_true_optimum()
    return RtoProblem(
        domain=domain,
        n_constraints=1,
        plant=plant,
        model=model,
        model_batch=model_batch,
        name="synthetic",
        true_optimum=u_star,
        true_cost=cost_star,
    )


def xsinx_problem(noise_std: float = XSINX_NOISE_STD, mismatch: float = 1.0) -> RtoProblem:
    """1-D unconstrained benchmark: minimize x sin(x) on [0, 12].

    The model is an affinely distorted copy of the truth (scaled by
    ``mismatch``), giving a minimal end-to-end problem for the loop."""
    domain = BoxDomain(np.array([XSINX_DOMAIN[0]]), np.array([XSINX_DOMAIN[1]]))

    def plant(u: np.ndarray, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        y = float(xsinx_truth(u[0]))
        if noise_std > 0.0:
            y += noise_std * rng.standard_normal()
        return y, np.empty(0)

    def model(u: np.ndarray) -> tuple[float, np.ndarray]:
        y = float(xsinx_truth(u[0]))
        return y + mismatch * (0.15 * u[0] - 0.1 * y), np.empty(0)

    def model_batch(us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        us = np.atleast_2d(us)
        y = xsinx_truth(us[:, 0])
        return y + mismatch * (0.15 * us[:, 0] - 0.1 * y), np.empty((us.shape[0], 0))

    # dense-grid location of the global minimum, for reference metadata
    grid = np.linspace(*XSINX_DOMAIN, 120001)
    vals = xsinx_truth(grid)
    best = int(np.argmin(vals))
    return RtoProblem(
        domain=domain,
        n_constraints=0,
        plant=plant,
        model=model,
        model_batch=model_batch,
        name="xsinx",
        true_optimum=np.array([grid[best]]),
        true_cost=float(vals[best]),
    )
