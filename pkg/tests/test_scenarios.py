import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynasindy.plant import BirotorEnv, EnvConfig
from dynasindy.scenarios import Scenario, compute_metrics, run_scenario


def pd_policy(obs):
    return np.clip([-0.128 + 3 * obs[0] - 1.5 * obs[1], 0.36 + obs[3] - obs[4]], -1, 1)


def step_trace(n=200, level=(0.35, 0.25), tau=20.0):
    k = np.arange(n)[:, None]
    ref = np.tile(level, (n, 1))
    return ref * (1 - np.exp(-k / tau)), ref


class TestMetrics:
    def test_perfect_tracking(self):
        _, ref = step_trace()
        m = compute_metrics(ref, ref)
        assert m.steady_state_error == (0.0, 0.0) and m.rmse == (0.0, 0.0)
        assert m.settling_index == 0

    def test_constant_offset(self):
        _, ref = step_trace()
        m = compute_metrics(ref - [0.08, -0.03], ref)
        assert m.steady_state_error == pytest.approx((0.08, 0.03))
        assert m.rmse == pytest.approx((0.08, 0.03))

    def test_overshoot_fraction(self):
        n = 100
        ref = np.tile([0.5, 0.2], (n, 1))
        y = np.zeros((n, 2))
        y[10:20] = [0.6, 0.2]
        y[20:] = ref[20:]
        m = compute_metrics(y, ref)
        assert m.overshoot == pytest.approx((0.2, 0.0))

    def test_settling_index(self):
        y, ref = step_trace(tau=10.0)
        m = compute_metrics(y, ref)
        err = np.abs(ref - y).max(axis=1)
        assert err[m.settling_index - 1] > 0.02 and np.all(err[m.settling_index:] <= 0.02)

    @settings(max_examples=30)
    @given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.integers(10, 300))
    def test_offset_invariance(self, da, dp, n):
        """Shifting trace and reference together changes nothing."""
        y, ref = step_trace(n)
        a = compute_metrics(y, ref)
        b = compute_metrics(y + [da, dp], ref + [da, dp])
        np.testing.assert_allclose(a.steady_state_error, b.steady_state_error, atol=1e-12)
        np.testing.assert_allclose(a.rmse, b.rmse, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compute_metrics(np.zeros((5, 2)), np.zeros((4, 2)))


class TestScenario:
    def test_sine_reference(self):
        s = Scenario.default("sine")
        t = np.array([0.0, 10.0, 40.0])
        expected = np.sin(2 * math.pi * 0.015 * t)[:, None] * [0.35, 0.25]
        np.testing.assert_allclose(s.reference(t), expected, rtol=1e-15)

    def test_square_reference(self):
        s = Scenario.default("square")
        r = s.reference([0.0, 49.9, 50.0, 99.9])
        np.testing.assert_allclose(r, [[0.4, -0.5], [0.4, -0.5], [-0.4, 0.0], [-0.4, 0.0]])

    def test_step_is_constant(self):
        r = Scenario.default("step").reference(np.linspace(0, 20, 7))
        assert np.all(r == [0.35, 0.25])

    @pytest.mark.parametrize("kwargs", [
        dict(kind="ramp"), dict(kind="sine", frequency=0.0), dict(kind="step", frequency=1.0),
        dict(duration=0.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            Scenario(**kwargs)

    def test_amplitude_beyond_bounds(self):
        with pytest.raises(ValueError):
            run_scenario(pd_policy, BirotorEnv(), Scenario("step", 4.0, 0.0))


class TestRun:
    def test_pd_step_response(self):
        data, m, refs = run_scenario(pd_policy, BirotorEnv(), Scenario.default("step"))
        assert len(data) == 400 and len(refs) == 400
        assert not data.blowup
        assert max(m.steady_state_error) < 0.01

    def test_deterministic(self):
        a = run_scenario(pd_policy, BirotorEnv(), Scenario.default("sine"))
        b = run_scenario(pd_policy, BirotorEnv(), Scenario.default("sine"))
        assert np.array_equal(a[0].states, b[0].states) and a[1] == b[1]

    def test_stops_when_out_of_bounds(self):
        env = BirotorEnv(EnvConfig(azimuth_bound=0.5))
        data, _, refs = run_scenario(lambda obs: np.array([1.0, 0.0]), env, Scenario("step", 0.3, 0.0))
        assert len(data) < 400 and len(refs) == len(data)
