import numpy as np
import pytest

from mfrto.errors import NonFiniteState
from mfrto.numerics import (
    PiecewiseConstantSchedule,
    integrate_ode,
    integrate_ode_batch,
)
from mfrto.plants import INITIAL_STATE, STAGE_EDGES, load_pbr_parameters, pbr_plant_rhs


def constant_schedule(values, t0=0.0, tf=10.0):
    return PiecewiseConstantSchedule(np.array([t0, tf]), np.atleast_2d(values))


def rk4_reference(rhs, x0, inputs, t0, tf, n_steps):
    """Independent fixed-step RK4 written directly in the test."""
    x = np.array(x0, dtype=float)
    h = (tf - t0) / n_steps
    t = t0
    for _ in range(n_steps):
        k1 = rhs(t, x, inputs)
        k2 = rhs(t + h / 2, x + h / 2 * k1, inputs)
        k3 = rhs(t + h / 2, x + h / 2 * k2, inputs)
        k4 = rhs(t + h, x + h * k3, inputs)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


class TestIntegrateOde:
    def test_zero_rhs_constant_trajectory(self):
        traj = integrate_ode(
            lambda t, x, u: np.zeros_like(x),
            np.array([1.0, 2.0, 3.0]),
            constant_schedule([0.0]),
            np.linspace(0.0, 10.0, 5),
        )
        assert traj.times[0] == 0.0 and traj.times[-1] == 10.0
        assert traj.states.shape == (5, 3)
        np.testing.assert_allclose(traj.states, [[1.0, 2.0, 3.0]] * 5)

    def test_constant_inflow_linear_growth(self):
        # dC/dt = F with F = 40, C(0) = 150: C(10) = 550
        traj = integrate_ode(
            lambda t, x, u: np.array([u[0]]),
            np.array([150.0]),
            constant_schedule([40.0]),
            np.array([0.0, 10.0]),
        )
        np.testing.assert_allclose(traj.states[-1], [550.0], rtol=1e-12)

    def test_pbr_against_independent_fine_step_oracle(self):
        params = load_pbr_parameters()
        inputs = np.array([260.0, 20.0])

        def rhs(t, x, u):
            return pbr_plant_rhs(t, x, u, params)

        traj = integrate_ode(
            rhs,
            INITIAL_STATE,
            constant_schedule(inputs, 0.0, 240.0),
            np.array([0.0, 240.0]),
            max_step=0.05,
        )
        oracle_end = rk4_reference(rhs, INITIAL_STATE, inputs, 0.0, 240.0, 48000)
        np.testing.assert_allclose(traj.states[-1], oracle_end, rtol=1e-6)

    def test_step_halving_convergence(self):
        params = load_pbr_parameters()
        sched = PiecewiseConstantSchedule(
            STAGE_EDGES, np.column_stack([np.linspace(150, 380, 6), np.linspace(0, 35, 6)])
        )

        def rhs(t, x, u):
            return pbr_plant_rhs(t, x, u, params)

        end = [
            integrate_ode(rhs, INITIAL_STATE, sched, STAGE_EDGES, max_step=h).states[-1]
            for h in (0.05, 0.025)
        ]
        assert np.max(np.abs(end[0] - end[1]) / np.maximum(np.abs(end[1]), 1e-12)) < 1e-7

    def test_inputs_switch_between_stages(self):
        sched = PiecewiseConstantSchedule(np.array([0.0, 1.0, 2.0]), np.array([[1.0], [-1.0]]))
        traj = integrate_ode(
            lambda t, x, u: np.array([u[0]]),
            np.array([0.0]),
            sched,
            np.array([0.0, 1.0, 2.0]),
        )
        np.testing.assert_allclose(traj.states[:, 0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_blow_up_raises(self):
        with pytest.raises(NonFiniteState):
            integrate_ode(
                lambda t, x, u: x * x,
                np.array([10.0]),
                constant_schedule([0.0], 0.0, 5.0),
                np.array([0.0, 5.0]),
            )

    def test_bad_grid_rejected(self):
        with pytest.raises(ValueError):
            integrate_ode(
                lambda t, x, u: x,
                np.array([1.0]),
                constant_schedule([0.0]),
                np.array([0.0, 0.0, 1.0]),
            )

    def test_schedule_must_cover_horizon(self):
        with pytest.raises(ValueError):
            integrate_ode(
                lambda t, x, u: x,
                np.array([1.0]),
                constant_schedule([0.0], 0.0, 5.0),
                np.array([0.0, 10.0]),
            )


class TestIntegrateOdeBatch:
    def test_matches_single_trajectories(self):
        params = load_pbr_parameters()

        def rhs(t, x, u):
            return pbr_plant_rhs(t, x, u, params)

        rng = np.random.default_rng(5)
        lights = rng.uniform(120, 400, size=(3, 6))
        feeds = rng.uniform(0, 40, size=(3, 6))
        stage_values = np.stack([lights, feeds], axis=-1)
        batch = integrate_ode_batch(rhs, INITIAL_STATE, STAGE_EDGES, stage_values, STAGE_EDGES)
        for b in range(3):
            sched = PiecewiseConstantSchedule(STAGE_EDGES, stage_values[b])
            single = integrate_ode(rhs, INITIAL_STATE, sched, STAGE_EDGES)
            np.testing.assert_allclose(batch[:, b, :], single.states, rtol=1e-12, atol=1e-12)

    def test_failed_member_leaves_nan_without_aborting(self):
        def rhs(t, x, u):
            return u[..., :1] * x * x

        stage_values = np.array([[[0.0]], [[1.0]]])  # second member blows up
        out = integrate_ode_batch(
            rhs, np.array([5.0]), np.array([0.0, 10.0]), stage_values, np.array([0.0, 10.0])
        )
        assert np.isfinite(out[-1, 0, 0])
        assert not np.isfinite(out[-1, 1, 0])
