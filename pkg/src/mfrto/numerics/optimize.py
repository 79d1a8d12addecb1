"""Derivative-free bounded minimization: simplex local search plus multistart.

The inner problems this package solves (acquisition functions over GP
posteriors with exact-penalty constraint terms) are cheap to evaluate,
non-smooth at penalty kinks and derivative-free, so a bounded
simplex-reflection search is used rather than a gradient NLP solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from ..errors import DimensionMismatch

DEFAULT_BUDGET = 400


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``lower <= u <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def intersect(self, other: "BoxDomain") -> "BoxDomain":
        return BoxDomain(
            np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper)
        )


def _initial_simplex(start: np.ndarray, domain: BoxDomain) -> np.ndarray:
    """Non-degenerate in-bounds simplex with the start as its first vertex.

    Steps point into the interior when the start sits on a face, so clipping
    can never collapse a vertex onto the start.
    """
    d = domain.dim
    width = np.where(domain.width > 0.0, domain.width, 1.0)
    step = 0.10 * width
    sim = np.tile(start, (d + 1, 1))
    for j in range(d):
        if start[j] + step[j] <= domain.upper[j]:
            sim[j + 1, j] += step[j]
        else:
            sim[j + 1, j] -= min(step[j], start[j] - domain.lower[j])
        if sim[j + 1, j] == start[j]:  # zero-width dimension
            sim[j + 1, j] = start[j]
    return sim


def local_minimize(
    objective: Callable[[np.ndarray], float],
    domain: BoxDomain,
    start: np.ndarray,
    budget: int = DEFAULT_BUDGET,
) -> tuple[np.ndarray, float]:
    """Bounded simplex search from ``start``; returns ``(argmin, value)``.

    Running out of budget is not an error: the best point found so far is
    returned. The result never exceeds the objective value at the start and
    always lies inside the domain.
    """
    start = np.asarray(start, dtype=float)
    if start.size != domain.dim:
        raise DimensionMismatch(f"start has dim {start.size}, domain {domain.dim}")
    if not domain.contains(start, tol=1e-12):
        raise ValueError("start must lie within the domain")
    start = domain.clip(start)

    res = minimize(
        objective,
        start,
        method="Nelder-Mead",
        bounds=list(zip(domain.lower, domain.upper)),
        options={
            "maxfev": max(int(budget), domain.dim + 2),
            "initial_simplex": _initial_simplex(start, domain),
            "xatol": 1e-10,
            "fatol": 1e-12,
        },
    )
    x = domain.clip(res.x)
    return x, float(res.fun)


def multistart_minimize(
    objective: Callable[[np.ndarray], float],
    domain: BoxDomain,
    n_starts: int,
    budget: int = DEFAULT_BUDGET,
    rng: Optional[np.random.Generator] = None,
    incumbent: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, float]:
    """Best of ``n_starts`` independent local searches.

    The first start is the incumbent (domain center when not given); the
    remaining ``n_starts - 1`` are drawn uniformly from the domain, one draw
    per start, so a fixed generator state yields a reproducible start
    sequence and adding starts can only improve the best value.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    if incumbent is None:
        incumbent = 0.5 * (domain.lower + domain.upper)
    best_x, best_f = local_minimize(objective, domain, incumbent, budget)
    for _ in range(n_starts - 1):
        if rng is None:
            raise ValueError("rng is required for n_starts > 1")
        start = domain.sample(rng, 1)[0]
        x, f = local_minimize(objective, domain, start, budget)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f
