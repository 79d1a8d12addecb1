"""Cholesky-based solves for symmetric positive (semi-)definite systems.

Gram matrices assembled from kernels are PSD in exact arithmetic but can be
numerically indefinite; :func:`factor_psd` therefore supports escalating a
diagonal jitter until the factorization succeeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from ..errors import DimensionMismatch, NotPositiveDefinite, OutOfRange

# Escalation schedule relative to mean(diag): start, growth factor, cap.
_JITTER_START_REL = 1e-10
_JITTER_GROWTH = 10.0
_JITTER_CAP_REL = 1e-4


@dataclass(frozen=True)
class PsdFactorization:
    """Lower-triangular Cholesky factor L of (A + jitter*I) = L @ L.T."""

    lower_triangular_factor: np.ndarray
    dimension: int
    jitter: float = 0.0

    @property
    def log_det(self) -> float:
        """log det(A + jitter*I), from the factor diagonal."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower_triangular_factor))))


def factor_psd(matrix: np.ndarray, jitter: float = 0.0) -> PsdFactorization:
    """Cholesky-factorize ``matrix + jitter*I``, escalating jitter on failure.

    Parameters
    ----------
    matrix : (n, n) symmetric array.
    jitter : initial nonnegative diagonal shift.

    Returns
    -------
    PsdFactorization whose ``jitter`` field records the shift actually used.

    Raises
    ------
    NotPositiveDefinite
        If factorization still fails once the jitter cap is exceeded.
    DimensionMismatch
        If ``matrix`` is not square.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {a.shape}")
    if jitter < 0.0:
        raise OutOfRange(f"jitter must be nonnegative, got {jitter}")
    n = a.shape[0]
    diag_scale = max(float(np.mean(np.diag(a))), np.finfo(float).tiny)
    cap = _JITTER_CAP_REL * diag_scale
    current = float(jitter)
    while True:
        try:
            shifted = a if current == 0.0 else a + current * np.eye(n)
            lower = cholesky(shifted, lower=True, check_finite=False)
            return PsdFactorization(lower, n, current)
        except np.linalg.LinAlgError:
            pass
        except Exception:  # scipy raises LinAlgError subclasses; be permissive
            pass
        if current >= cap:
            raise NotPositiveDefinite(
                f"cholesky failed for {n}x{n} matrix at jitter {current:.3e} (cap {cap:.3e})"
            )
        current = _JITTER_START_REL * diag_scale if current == 0.0 else current * _JITTER_GROWTH
        current = min(current, cap)


def solve_psd(fact: PsdFactorization, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(A + jitter*I) x = rhs`` using the cached factorization.

    ``rhs`` may be a vector or a matrix of stacked right-hand sides.
    """
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != fact.dimension:
        raise DimensionMismatch(
            f"rhs has leading dimension {b.shape[0]}, factor is {fact.dimension}"
        )
    return cho_solve((fact.lower_triangular_factor, True), b, check_finite=False)


def solve_lower(fact: PsdFactorization, rhs: np.ndarray) -> np.ndarray:
    """Solve ``L x = rhs`` with the lower factor only (half solve)."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != fact.dimension:
        raise DimensionMismatch(
            f"rhs has leading dimension {b.shape[0]}, factor is {fact.dimension}"
        )
    return solve_triangular(
        fact.lower_triangular_factor, b, lower=True, check_finite=False
    )


def inverse_from_factor(fact: PsdFactorization) -> np.ndarray:
    """Explicit inverse of (A + jitter*I); used by batched prediction paths."""
    return solve_psd(fact, np.eye(fact.dimension))
