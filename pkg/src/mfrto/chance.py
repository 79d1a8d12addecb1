"""Distributionally robust reformulation of probabilistic constraints.

A chance constraint P(q <= 0) >= 1 - alpha holds for every distribution with
known mean and variance iff

    mean + r * sqrt(variance) <= 0,    r = sqrt((1 - alpha) / alpha),

so each probabilistic constraint is replaced by this deterministic backoff on
the surrogate posterior. The bound is conservative for the whole moment
family; overriding r manually trades that guarantee for less conservatism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import OutOfRange
from .gp import Posterior


def cantelli_multiplier(alpha: float) -> float:
    """Backoff multiplier r = sqrt((1 - alpha) / alpha) for risk level alpha."""
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    return math.sqrt((1.0 - alpha) / alpha)


@dataclass(frozen=True)
class RiskSpec:
    """Violation probability plus the derived backoff multiplier.

    ``r_override`` replaces the derived multiplier as a manual design
    parameter; doing so voids the distributional guarantee and is off by
    default.
    """

    alpha: float
    r_override: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise OutOfRange(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.r_override is not None and self.r_override < 0.0:
            raise OutOfRange("r_override must be nonnegative")

    @property
    def r(self) -> float:
        return cantelli_multiplier(self.alpha)

    @property
    def multiplier(self) -> float:
        return self.r if self.r_override is None else self.r_override


def robust_constraint_value(post: Posterior, r: float) -> float:
    """Backed-off constraint value mean + r * std; satisfied iff <= 0."""
    if r < 0.0:
        raise OutOfRange(f"multiplier must be nonnegative, got {r}")
    return post.mean + r * math.sqrt(max(post.variance, 0.0))
