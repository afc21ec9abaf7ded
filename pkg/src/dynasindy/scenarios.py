"""Evaluation scenarios and tracking metrics for trained policies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import BirotorEnv, NumericalBlowupError, observe
from .signals import TrajectoryDataset

SETTLING_BAND = 0.02
STEADY_FRACTION = 0.2
KINDS = ("step", "sine", "square")

# kind -> (azimuth amplitude, pitch amplitude, frequency Hz, duration s)
DEFAULTS = {
    "step": (0.35, 0.25, 0.0, 20.0),
    "sine": (0.35, 0.25, 0.015, 100.0),
    "square": (0.4, -0.5, 0.01, 100.0),
}


@dataclass(frozen=True)
class Scenario:
    """Reference trajectory for both axes.

    ``step`` holds both amplitudes from t = 0. ``sine`` is ``A*sin(2*pi*f*t)``
    on both axes. ``square`` swings the azimuth between ``+A`` and ``-A`` and
    toggles the pitch between ``A`` and 0, starting high.
    """

    kind: str = "step"
    azimuth_amplitude: float = 0.35
    pitch_amplitude: float = 0.25
    frequency: float = 0.0
    duration: float = 20.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"scenario kind must be one of {KINDS}")
        if self.frequency < 0:
            raise ValueError("frequency must be >= 0")
        if self.kind == "step" and self.frequency != 0:
            raise ValueError("step scenarios have frequency 0")
        if self.kind != "step" and self.frequency == 0:
            raise ValueError(f"{self.kind} scenarios need a positive frequency")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @classmethod
    def default(cls, kind: str) -> "Scenario":
        if kind not in DEFAULTS:
            raise ValueError(f"scenario kind must be one of {KINDS}")
        return cls(kind, *DEFAULTS[kind])

    def reference(self, t) -> np.ndarray:
        """Reference angles at times ``t``, shape ``(len(t), 2)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        amp = np.array([self.azimuth_amplitude, self.pitch_amplitude])
        if self.kind == "step":
            return np.tile(amp, (t.size, 1))
        phase = 2.0 * math.pi * self.frequency * t
        if self.kind == "sine":
            return np.sin(phase)[:, None] * amp
        high = (t * self.frequency) % 1.0 < 0.5
        az = np.where(high, 1.0, -1.0) * self.azimuth_amplitude
        pitch = np.where(high, self.pitch_amplitude, 0.0)
        return np.column_stack([az, pitch])

    def check_bounds(self, env: BirotorEnv):
        if abs(self.azimuth_amplitude) > env.config.azimuth_bound:
            raise ValueError("azimuth amplitude exceeds the environment bound")
        if abs(self.pitch_amplitude) > env.config.pitch_bound:
            raise ValueError("pitch amplitude exceeds the environment bound")


@dataclass(frozen=True)
class TrackingMetrics:
    steady_state_error: tuple  # (azimuth, pitch), mean |e| over the final 20%
    rmse: tuple
    overshoot: tuple  # fraction of the largest commanded excursion
    settling_index: int  # first sample after which both |e| stay within the band

    FIELDS = ("steady_azimuth", "steady_pitch", "rmse_azimuth", "rmse_pitch",
              "overshoot_azimuth", "overshoot_pitch", "settling_index")

    def row(self) -> list:
        return [*self.steady_state_error, *self.rmse, *self.overshoot, self.settling_index]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.FIELDS) + "\n")
            fh.write(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                              for v in self.row()) + "\n")


def _overshoot(actual, ref):
    start = actual[0]
    excursion = ref - start
    scale = np.max(np.abs(excursion))
    if scale == 0:
        return 0.0
    excess = np.sign(excursion) * (actual - ref)
    return float(max(0.0, excess.max()) / scale)


def compute_metrics(angles, reference, band: float = SETTLING_BAND) -> TrackingMetrics:
    """Tracking metrics of an ``(n, 2)`` angle trace against its reference."""
    y = np.asarray(angles, dtype=float)
    r = np.asarray(reference, dtype=float)
    if y.shape != r.shape:
        raise ValueError(f"trace shape {y.shape} != reference shape {r.shape}")
    if y.ndim != 2 or y.shape[1] != 2 or len(y) == 0:
        raise ValueError("expected a non-empty (n, 2) trace")
    n = len(y)
    err = np.abs(r - y)
    tail = max(1, int(round(STEADY_FRACTION * n)))
    steady = err[-tail:].mean(axis=0)
    rmse = np.sqrt(np.mean(err**2, axis=0))
    over = tuple(_overshoot(y[:, i], r[:, i]) for i in range(2))
    outside = np.flatnonzero(np.any(err > band, axis=1))
    settling = 0 if outside.size == 0 else int(outside[-1] + 1)
    return TrackingMetrics(tuple(map(float, steady)), tuple(map(float, rmse)), over, settling)


def run_scenario(policy, env: BirotorEnv, scenario: Scenario):
    """Roll a deterministic ``policy(obs)`` against the scenario reference.

    The trace stops early if the plant leaves its bounds or blows up; a
    blowup sets the dataset's ``blowup`` flag. Returns ``(dataset, metrics,
    reference)`` where row ``k`` of the dataset is the state at which the
    ``k``-th action was applied.
    """
    scenario.check_bounds(env)
    dt = env.config.control_dt
    n = int(math.floor(scenario.duration / dt + 1e-9))
    times = np.arange(n) * dt
    refs = scenario.reference(times)
    state = env.reset(refs[0])
    states, actions, rewards = [], [], []
    blowup = False
    for k in range(n):
        env.reference = refs[k]
        action = np.clip(np.asarray(policy(observe(state, refs[k])), dtype=float), -1.0, 1.0)
        try:
            nxt, r, terminated, _ = env.step(action)
        except NumericalBlowupError:
            blowup = True
            break
        states.append(state)
        actions.append(action)
        rewards.append(r)
        state = nxt
        if terminated:
            break
    m = len(states)
    if m == 0:
        raise NumericalBlowupError("scenario diverged on the first step")
    data = TrajectoryDataset(times[:m], np.array(states), np.array(actions),
                             rewards=np.array(rewards), blowup=blowup)
    metrics = compute_metrics(data.states[:, :2], refs[:m])
    return data, metrics, refs[:m]
