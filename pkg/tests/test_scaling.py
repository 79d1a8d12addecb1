import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfrto.numerics import standardizer_fit


def test_two_point_population_convention():
    # {0, 2}: mean 1, population std 1 (ddof=0)
    s = standardizer_fit(np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(s.shift, [1.0])
    np.testing.assert_allclose(s.scale, [1.0])


def test_constant_column_scale_one():
    s = standardizer_fit(np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 3.0]]))
    assert s.scale[0] == 1.0
    z = s.apply(np.array([[3.0, 2.0]]))
    assert np.all(np.isfinite(z))


def test_round_trip_random_matrix():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 3)) * 50.0 + 10.0
    s = standardizer_fit(x)
    z = s.apply(x)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(s.invert(z), x, rtol=1e-12, atol=1e-12)


def test_too_few_samples():
    with pytest.raises(ValueError):
        standardizer_fit(np.array([[1.0, 2.0]]))


@settings(max_examples=200, deadline=None)
@given(
    arrays(
        np.float64,
        st.tuples(st.integers(2, 12), st.integers(1, 4)),
        elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
    )
)
def test_round_trip_identity_property(x):
    s = standardizer_fit(x)
    back = s.invert(s.apply(x))
    np.testing.assert_allclose(back, x, rtol=1e-9, atol=1e-9 * (1 + np.abs(x).max()))
