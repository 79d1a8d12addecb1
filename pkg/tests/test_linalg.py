import numpy as np
import pytest

from mfrto.errors import DimensionMismatch, NotPositiveDefinite, OutOfRange
from mfrto.numerics import factor_psd, solve_psd


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


class TestFactorPsd:
    def test_identity(self):
        fact = factor_psd(np.eye(3), jitter=0.0)
        np.testing.assert_allclose(fact.lower_triangular_factor, np.eye(3))
        assert fact.jitter == 0.0
        assert fact.dimension == 3

    def test_hand_cholesky_2x2(self):
        # [[4,2],[2,3]]: L11=2, L21=1, L22=sqrt(3-1)=sqrt(2)
        fact = factor_psd(np.array([[4.0, 2.0], [2.0, 3.0]]))
        expected = np.array([[2.0, 0.0], [1.0, np.sqrt(2.0)]])
        np.testing.assert_allclose(fact.lower_triangular_factor, expected, rtol=1e-14)

    def test_singular_needs_escalation(self):
        a = np.array([[1.0, 1.0], [1.0, 1.0]])
        fact = factor_psd(a, jitter=0.0)
        assert fact.jitter > 0.0
        lower = fact.lower_triangular_factor
        jittered = a + fact.jitter * np.eye(2)
        np.testing.assert_allclose(lower @ lower.T, jittered, rtol=1e-10)

    def test_reconstruction_tolerance(self):
        rng = np.random.default_rng(1)
        for n in (2, 5, 20):
            a = random_spd(rng, n)
            fact = factor_psd(a)
            lower = fact.lower_triangular_factor
            recon = lower @ lower.T + 0.0
            np.testing.assert_allclose(recon, a + fact.jitter * np.eye(n), rtol=1e-10)
            assert np.all(np.diag(lower) > 0.0)

    def test_indefinite_raises_after_cap(self):
        with pytest.raises(NotPositiveDefinite):
            factor_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_not_square(self):
        with pytest.raises(DimensionMismatch):
            factor_psd(np.ones((2, 3)))

    def test_negative_jitter(self):
        with pytest.raises(OutOfRange):
            factor_psd(np.eye(2), jitter=-1.0)


class TestSolvePsd:
    def test_identity_solve(self):
        fact = factor_psd(np.eye(4))
        b = np.arange(4.0)
        np.testing.assert_allclose(solve_psd(fact, b), b)

    def test_hand_2x2_solve(self):
        # inv([[4,2],[2,3]]) = [[3,-2],[-2,4]]/8, so x = [0.375, -0.25]
        fact = factor_psd(np.array([[4.0, 2.0], [2.0, 3.0]]))
        x = solve_psd(fact, np.array([1.0, 0.0]))
        np.testing.assert_allclose(x, [0.375, -0.25], rtol=1e-14)

    def test_against_dense_inverse_oracle(self):
        rng = np.random.default_rng(2)
        a = random_spd(rng, 5)
        b = rng.standard_normal(5)
        x = solve_psd(factor_psd(a), b)
        np.testing.assert_allclose(x, np.linalg.inv(a) @ b, rtol=1e-8)

    def test_matrix_rhs(self):
        rng = np.random.default_rng(3)
        a = random_spd(rng, 6)
        b = rng.standard_normal((6, 3))
        x = solve_psd(factor_psd(a), b)
        np.testing.assert_allclose(a @ x, b, atol=1e-8)

    def test_residual_up_to_dim_200(self):
        rng = np.random.default_rng(4)
        for n in (10, 50, 200):
            a = random_spd(rng, n)
            b = rng.standard_normal(n)
            fact = factor_psd(a)
            x = solve_psd(fact, b)
            resid = np.linalg.norm((a + fact.jitter * np.eye(n)) @ x - b)
            assert resid / np.linalg.norm(b) < 1e-8

    def test_dimension_mismatch(self):
        fact = factor_psd(np.eye(3))
        with pytest.raises(DimensionMismatch):
            solve_psd(fact, np.ones(4))
