import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynasindy.plant import (
    BirotorEnv, EnvConfig, InvalidInputError, NumericalBlowupError, RewardConfig, derivative,
    integrate, observe, out_of_bounds, reset, reward, rk4_step, step,
)


def oracle_rhs(x, u):
    """The identified bi-rotor equations written out by hand."""
    x1, x2, x3, x4, x5, x6 = x
    u1, u2 = u
    c, s = math.cos(x2), math.sin(x2)
    return np.array([
        x3,
        x4,
        -10.0573 * x3 + 9.8316e-4 * x5 * c - 0.7025 * u2 * c + 0.9479 * c,
        0.5961 - 0.414 * x4 + 0.0013 * x6 + 0.1303 * u1
        - 16.3547 * x3**2 * s - 3.54373 * s - 1.7473 * c,
        262.7 - 5.2281 * x5 + 3.7e4 * u1,
        -8.54 - 1.4193 * x6 + 6.1e3 * u2,
    ])


def oracle_rk4(x, u, h):
    k1 = oracle_rhs(x, u)
    k2 = oracle_rhs(x + h / 2 * k1, u)
    k3 = oracle_rhs(x + h / 2 * k2, u)
    k4 = oracle_rhs(x + h * k3, u)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


angles = st.floats(-1.5, 1.5)
rates = st.floats(-5, 5)
speeds = st.floats(-5000, 5000)
inputs = st.floats(-1, 1)
states = st.tuples(angles, angles, rates, rates, speeds, speeds).map(np.array)
slow_states = st.tuples(angles, angles, rates, rates, st.floats(-1000, 1000),
                        st.floats(-1000, 1000)).map(np.array)
actions = st.tuples(inputs, inputs).map(np.array)


class TestDerivative:
    def test_azimuth_kinematics(self):
        assert derivative([0, 0, 0.5, 0, 0, 0], [0, 0])[0] == pytest.approx(0.5)

    def test_values_at_origin(self):
        xdot = derivative(np.zeros(6), [0, 0])
        assert xdot[2] == pytest.approx(0.9479)
        assert xdot[3] == pytest.approx(0.5961 - 1.7473)
        assert xdot[3] == pytest.approx(-1.1512)
        assert xdot[4] == pytest.approx(262.7)
        assert xdot[5] == pytest.approx(-8.54)

    @given(states, actions)
    def test_matches_hand_written_equations(self, x, u):
        np.testing.assert_allclose(derivative(x, u), oracle_rhs(x, u), rtol=1e-12, atol=1e-9)

    def test_pure(self):
        x = np.array([0.1, -0.2, 0.3, 0.4, 100.0, -50.0])
        assert np.array_equal(derivative(x, [0.3, -0.1]), derivative(x.copy(), [0.3, -0.1]))

    @pytest.mark.parametrize("x, u", [
        ([np.nan, 0, 0, 0, 0, 0], [0, 0]),
        ([0, 0, np.inf, 0, 0, 0], [0, 0]),
        (np.zeros(6), [np.nan, 0]),
        (np.zeros(6), [1.5, 0]),
    ])
    def test_invalid_input(self, x, u):
        with pytest.raises(InvalidInputError):
            derivative(x, u)


class TestStep:
    def test_zero_control_period_is_identity(self):
        x = np.array([0.1, 0.2, 0.3, 0.4, 5.0, 6.0])
        nxt, term = step(x, [0.5, 0.5], EnvConfig(control_dt=0.0))
        assert np.array_equal(nxt, x) and not term

    def test_single_substep_matches_oracle(self):
        cfg = EnvConfig(control_dt=0.01, integrator_substep_dt=0.01)
        nxt, _ = step(np.zeros(6), [0, 0], cfg)
        np.testing.assert_allclose(nxt, oracle_rk4(np.zeros(6), (0, 0), 0.01), rtol=0, atol=1e-12)

    @settings(max_examples=30)
    @given(slow_states, actions)
    def test_control_step_matches_oracle(self, x, u):
        ref = x
        for _ in range(5):
            ref = oracle_rk4(ref, u, 0.01)
        nxt, _ = step(x, u, EnvConfig())
        np.testing.assert_allclose(nxt, ref, rtol=1e-12, atol=1e-10)

    def test_rotor_speed_settles_at_equilibrium(self):
        x = np.zeros(6)
        for _ in range(40):
            x = integrate(derivative, x, np.zeros(2), 0.5, 0.01)
        assert x[4] == pytest.approx(262.7 / 5.2281, rel=1e-6)
        assert x[5] == pytest.approx(-8.54 / 1.4193, rel=1e-6)

    def test_rotor_speeds_monotone_with_zero_input(self):
        x = np.zeros(6)
        traj = []
        for _ in range(300):
            x = integrate(derivative, x, np.zeros(2), 0.01, 0.01)
            traj.append(x[4:6])
        traj = np.array(traj)
        assert np.all(np.diff(traj[:, 0]) >= 0) and np.all(np.diff(traj[:, 1]) <= 0)

    def test_terminates_outside_bounds(self):
        cfg = EnvConfig(azimuth_bound=0.1)
        _, term = step([0.099, 0, 5.0, 0, 0, 0], [0, 0], cfg)
        assert term

    @given(st.floats(-4, 4), st.floats(-2, 2))
    def test_out_of_bounds_definition(self, a, p):
        cfg = EnvConfig()
        assert out_of_bounds(np.array([a, p, 0, 0, 0, 0]), cfg) == (
            abs(a) > math.pi or abs(p) > math.pi / 2
        )

    def test_blowup_names_component(self):
        def runaway(x, u):
            with np.errstate(over="ignore"):
                return np.array([0, 0, 0, 0, 0, 1e300]) * (1 + x * x)
        with pytest.raises(NumericalBlowupError, match="x6"):
            step(np.ones(6), [0, 0], EnvConfig(), rhs=runaway)

    def test_rk4_order(self):
        x = np.array([0.2, -0.3, 0.5, -0.4, 800.0, 600.0])
        u = np.array([0.3, -0.2])
        h = 0.01
        ref = x
        for _ in range(64):
            ref = rk4_step(derivative, ref, u, h / 64)
        e1 = np.max(np.abs(rk4_step(derivative, x, u, h) - ref))
        half = rk4_step(derivative, rk4_step(derivative, x, u, h / 2), u, h / 2)
        e2 = np.max(np.abs(half - ref))
        assert e1 / e2 >= 12


class TestReward:
    def test_perfect_tracking_earns_bonus(self):
        assert reward(np.zeros(6), (0, 0), (0, 0), RewardConfig()) == pytest.approx(1.0)

    def test_quadratic_errors(self):
        cfg = RewardConfig(a=1, b=1, c=0.1, d=1)
        assert reward(np.zeros(6), (0, 0), (0.1, 0.2), cfg) == pytest.approx(-0.05)

    def test_velocity_change_penalty(self):
        state = np.array([0, 0, 1.0, 0, 0, 0])
        assert reward(state, (0, 0), (0, 0), RewardConfig(c=0.1)) == pytest.approx(0.9)

    def test_out_of_bounds_penalty(self):
        assert reward(np.zeros(6), (0, 0), (0, 0), RewardConfig(), True) == pytest.approx(1 - 50)

    def test_bonus_needs_both_axes(self):
        r = reward(np.zeros(6), (0, 0), (0.005, 0.02), RewardConfig())
        assert r == pytest.approx(-4 * 0.005**2 - 4 * 0.02**2)

    @given(st.floats(0, 2), st.floats(1e-3, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_strictly_decreasing_in_azimuth_error(self, e, de, ep, dv):
        cfg = RewardConfig()
        state = np.array([0, 0, dv, 0, 0, 0])
        near = reward(state, (0, 0), (e, ep), cfg)
        far = reward(state, (0, 0), (e + de, ep), cfg)
        assert far < near

    @given(st.floats(-3, 3), st.floats(-1.5, 1.5), rates, rates)
    def test_maximum_is_d(self, a, p, va, vp):
        cfg = RewardConfig()
        assert reward(np.array([a, p, va, vp, 0, 0]), (0, 0), (0.3, -0.2), cfg) <= cfg.d

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(0)
        s = rng.normal(size=(5, 6))
        prev = rng.normal(size=(5, 2))
        ref = rng.normal(size=(5, 2))
        batch = reward(s, prev, ref, RewardConfig())
        single = [reward(s[i], prev[i], ref[i], RewardConfig()) for i in range(5)]
        np.testing.assert_allclose(batch, single, rtol=1e-15)

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            reward(np.full(6, np.nan), (0, 0), (0, 0), RewardConfig())


class TestEnv:
    def test_reset_default(self):
        assert reset(EnvConfig()).tolist() == [0.0] * 6

    def test_reset_custom(self):
        s = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
        assert reset(EnvConfig(initial_state=s)).tolist() == list(s)

    def test_reset_repeatable(self):
        env = BirotorEnv()
        a = env.reset((0.1, 0.1))
        env.step([1, 1])
        assert np.array_equal(env.reset((0.1, 0.1)), a)

    def test_truncation_after_max_steps(self):
        env = BirotorEnv(EnvConfig(max_steps=3))
        env.reset((0, 0))
        flags = [env.step([-0.13, 0.15])[3] for _ in range(3)]
        assert flags == [False, False, True]

    def test_step_clips_actions(self):
        env = BirotorEnv()
        env.reset()
        a, *_ = env.step([5.0, -5.0])
        env.reset()
        b, *_ = env.step([1.0, -1.0])
        assert np.array_equal(a, b)

    def test_observation_layout(self):
        s = np.array([0.1, -0.2, 0.3, 0.4, 2000.0, -1000.0])
        np.testing.assert_allclose(observe(s, (0.5, 0.1)), [0.4, 0.3, 2.0, 0.3, 0.4, -1.0])

    @pytest.mark.parametrize("kwargs", [
        dict(max_steps=0), dict(azimuth_bound=0), dict(integrator_substep_dt=0.03),
        dict(initial_state=(0, 0)),
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            EnvConfig(**kwargs)
