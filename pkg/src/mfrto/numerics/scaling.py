"""Affine input/output standardization used to condition GP training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension affine map ``z = (x - shift) / scale``.

    ``scale`` entries are never zero; dimensions with no spread get scale 1.
    """

    shift: np.ndarray
    scale: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.shift

    @staticmethod
    def identity(dim: int) -> "Standardizer":
        return Standardizer(np.zeros(dim), np.ones(dim))


def standardizer_fit(samples: np.ndarray) -> Standardizer:
    """Fit shift/scale so transformed samples have zero mean, unit std.

    Uses the population (ddof=0) standard deviation. Columns with zero
    spread keep scale 1 so the transform stays invertible.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 samples, got {x.shape[0]}")
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return Standardizer(shift, scale)
