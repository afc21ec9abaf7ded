"""Simulated bi-rotor plant.

State ``x = (alpha_a, alpha_p, Omega_a, Omega_p, omega_a, omega_p)``: azimuth and
pitch angles, their angular velocities, then tail- and main-rotor speeds.
Inputs ``u = (u1, u2)`` are normalised actuator commands in [-1, 1].

The continuous dynamics are the sparse coefficient matrix identified for the
laboratory rig, evaluated over :func:`~dynasindy.library.identified_library`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .library import FeatureLibrary, identified_library

STATE_NAMES = ("x1", "x2", "x3", "x4", "x5", "x6")

# feature -> coefficients of (dx1, ..., dx6)
TABLE2_COEFFICIENTS = {
    "1": (0, 0, 0, 0.5961, 262.7, -8.54),
    "x3": (1, 0, -10.0573, 0, 0, 0),
    "x4": (0, 1, 0, -0.414, 0, 0),
    "x5": (0, 0, 0, 0, -5.2281, 0),
    "x6": (0, 0, 0, 0.0013, 0, -1.4193),
    "u1": (0, 0, 0, 0.1303, 3.7e4, 0),
    "u2": (0, 0, 0, 0, 0, 6.1e3),
    "x5*cos(x2)": (0, 0, 9.8316e-4, 0, 0, 0),
    "u2*cos(x2)": (0, 0, -0.7025, 0, 0, 0),
    "x3^2*sin(x2)": (0, 0, 0, -16.3547, 0, 0),
    "sin(x2)": (0, 0, 0, -3.54373, 0, 0),
    "cos(x2)": (0, 0, 0.9479, -1.7473, 0, 0),
}


class InvalidInputError(ValueError):
    """Non-finite or out-of-range input to the plant."""


class NumericalBlowupError(ArithmeticError):
    """Integration produced a non-finite state."""


def ground_truth_xi(library: FeatureLibrary | None = None) -> np.ndarray:
    """Plant coefficient matrix aligned to ``library`` (rows) and states (columns)."""
    library = library or identified_library()
    xi = np.zeros((len(library), 6))
    names = library.names()
    for name, coeffs in TABLE2_COEFFICIENTS.items():
        if name not in names:
            raise ValueError(f"library lacks plant feature {name!r}")
        xi[names.index(name)] = coeffs
    return xi


def _feature_expr(feature) -> str:
    v = feature.var
    return {
        "const": "1.0",
        "linear": v,
        "cos_x2": f"{v} * cos_x2",
        "sq_sin_x2": f"{v} * {v} * sin_x2",
        "sin": f"sin({v})",
        "cos": f"cos({v})",
        "poly": f"{v} ** {feature.power}",
    }[feature.kind]


class SparseDynamics:
    """Right-hand side ``xdot = features(x, u) @ xi`` over the active features.

    The sparse sum is compiled into straight-line code once, which keeps
    single-state calls (the RK4 inner loop) cheap. Accepts a ``(6,)`` state or
    an ``(n, 6)`` batch.
    """

    def __init__(self, library: FeatureLibrary, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (len(library), library.n_states):
            raise ValueError(f"xi shape {xi.shape} does not match library of {len(library)}")
        active = np.any(xi != 0.0, axis=1)
        self.library = library.subset(active)
        self.xi = xi[active]
        self._scalar, self._batch = self._compile()

    def _compile(self):
        ns, ni = self.library.n_states, self.library.n_inputs
        args = [f"x{i + 1}" for i in range(ns)] + [f"u{j + 1}" for j in range(ni)]
        exprs = [_feature_expr(f) for f in self.library.features]
        rows = []
        for k in range(ns):
            terms = [
                f"{float(c)!r} * ({e})" for c, e in zip(self.xi[:, k], exprs) if c != 0.0
            ]
            rows.append(" + ".join(terms) if terms else "zero")
        src = (
            f"def rhs({', '.join(args)}, zero):\n"
            "    cos_x2 = cos(x2)\n"
            "    sin_x2 = sin(x2)\n"
            f"    return ({', '.join(rows)},)\n"
        )
        fns = []
        for mod in (math, np):
            scope = {"sin": mod.sin, "cos": mod.cos}
            exec(compile(src, "<sparse-dynamics>", "exec"), scope)
            fns.append(scope["rhs"])
        return fns

    def __call__(self, state, action) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        action = np.asarray(action, dtype=float)
        if state.ndim == 1:
            return np.array(self._scalar(*state.tolist(), *action.tolist(), 0.0))
        zero = np.zeros(state.shape[0])
        cols = self._batch(*state.T, *np.atleast_2d(action).T, zero)
        return np.stack(np.broadcast_arrays(*cols, zero)[:-1], axis=1)


_PLANT = SparseDynamics(identified_library(), ground_truth_xi())


def _check_finite(state, action):
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))):
        raise InvalidInputError("state and action must be finite")


def derivative(state, action) -> np.ndarray:
    """Time derivative of the plant state under a held action."""
    state = np.asarray(state, dtype=float)
    action = np.asarray(action, dtype=float)
    _check_finite(state, action)
    if np.any(np.abs(action) > 1.0):
        raise InvalidInputError(f"action {action} outside [-1, 1]")
    return _PLANT(state, action)


def rk4_step(rhs, state, action, dt):
    """One classical Runge-Kutta step with the action held constant."""
    k1 = rhs(state, action)
    k2 = rhs(state + 0.5 * dt * k1, action)
    k3 = rhs(state + 0.5 * dt * k2, action)
    k4 = rhs(state + dt * k3, action)
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(rhs, state, action, duration, substep):
    """Advance ``state`` by ``duration`` in RK4 steps of ``substep`` (zero-order hold)."""
    state = np.asarray(state, dtype=float)
    if duration == 0:
        return state.copy()
    n = int(round(duration / substep))
    for _ in range(n):
        state = rk4_step(rhs, state, action, substep)
    bad = ~np.isfinite(state)
    if np.any(bad):
        names = [STATE_NAMES[i % 6] for i in np.flatnonzero(bad)]
        raise NumericalBlowupError(f"non-finite state component(s): {', '.join(names)}")
    return state


@dataclass(frozen=True)
class RewardConfig:
    a: float = 4.0
    b: float = 4.0
    c: float = 0.1
    d: float = 1.0
    bonus_threshold: float = 0.01
    oob_penalty: float = 50.0

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("reward weights must be non-negative")
        if self.bonus_threshold <= 0:
            raise ValueError("bonus_threshold must be positive")


@dataclass(frozen=True)
class EnvConfig:
    control_dt: float = 0.05
    integrator_substep_dt: float = 0.01
    max_steps: int = 400
    azimuth_bound: float = math.pi
    pitch_bound: float = math.pi / 2
    initial_state: tuple = (0.0,) * 6

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.azimuth_bound <= 0 or self.pitch_bound <= 0:
            raise ValueError("bounds must be positive")
        if self.integrator_substep_dt <= 0 or self.control_dt < 0:
            raise ValueError("time steps must be positive")
        ratio = self.control_dt / self.integrator_substep_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("integrator_substep_dt must divide control_dt evenly")
        if len(self.initial_state) != 6:
            raise ValueError("initial_state needs six entries")
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))


def out_of_bounds(state, config: EnvConfig):
    """True where azimuth or pitch exceed the configured limits (works on batches)."""
    state = np.asarray(state)
    return (np.abs(state[..., 0]) > config.azimuth_bound) | (
        np.abs(state[..., 1]) > config.pitch_bound
    )


def step(state, action, config: EnvConfig, rhs=None):
    """Hold ``action`` for one control period; returns ``(next_state, terminated)``."""
    state = np.asarray(state, dtype=float)
    action = np.asarray(action, dtype=float)
    _check_finite(state, action)
    nxt = integrate(rhs or _PLANT, state, action, config.control_dt, config.integrator_substep_dt)
    return nxt, bool(out_of_bounds(nxt, config))


def reward(state, prev_velocities, reference, cfg: RewardConfig, terminated=False):
    """Tracking reward; vectorised over leading axes of ``state``/``reference``.

    ``prev_velocities`` are the azimuth and pitch rates before the step.
    """
    state = np.asarray(state, dtype=float)
    prev = np.asarray(prev_velocities, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(prev)) and np.all(np.isfinite(ref))):
        raise InvalidInputError("reward inputs must be finite")
    e_a = ref[..., 0] - state[..., 0]
    e_p = ref[..., 1] - state[..., 1]
    d_a = state[..., 2] - prev[..., 0]
    d_p = state[..., 3] - prev[..., 1]
    r = -(cfg.a * e_a**2 + cfg.b * e_p**2) - cfg.c * (d_a**2 + d_p**2)
    bonus = (np.abs(e_a) < cfg.bonus_threshold) & (np.abs(e_p) < cfg.bonus_threshold)
    r = r + np.where(bonus, cfg.d, 0.0) - np.where(terminated, cfg.oob_penalty, 0.0)
    return float(r) if np.ndim(r) == 0 else r


def reset(config: EnvConfig) -> np.ndarray:
    return np.array(config.initial_state, dtype=float)


# Rotor speeds reach several thousand rad/s; keep agent inputs O(1).
ROTOR_SCALE = 1e-3


def observe(state, reference) -> np.ndarray:
    """Agent observation: tracking errors in place of angles, scaled rotor speeds.

    Ordered ``(e_a, Omega_a, omega_a, e_p, Omega_p, omega_p)``.
    """
    s = np.asarray(state, dtype=float)
    r = np.asarray(reference, dtype=float)
    return np.stack(
        [
            r[..., 0] - s[..., 0],
            s[..., 2],
            s[..., 4] * ROTOR_SCALE,
            r[..., 1] - s[..., 1],
            s[..., 3],
            s[..., 5] * ROTOR_SCALE,
        ],
        axis=-1,
    )


class BirotorEnv:
    """Episode wrapper around the plant (or any surrogate right-hand side).

    >>> env = BirotorEnv()
    >>> env.reset((0.2, -0.1)).tolist()
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    """

    def __init__(self, config: EnvConfig | None = None, reward_config: RewardConfig | None = None,
                 rhs=None):
        self.config = config or EnvConfig()
        self.reward_config = reward_config or RewardConfig()
        self.rhs = rhs or _PLANT
        self.state = reset(self.config)
        self.reference = np.zeros(2)
        self.steps = 0

    def with_dynamics(self, rhs) -> "BirotorEnv":
        """Same configuration, different dynamics (e.g. an identified model)."""
        return BirotorEnv(self.config, self.reward_config, rhs)

    def reset(self, reference=(0.0, 0.0), state=None) -> np.ndarray:
        self.state = reset(self.config) if state is None else np.array(state, dtype=float)
        self.reference = np.asarray(reference, dtype=float).copy()
        self.steps = 0
        return self.state.copy()

    def observation(self) -> np.ndarray:
        return observe(self.state, self.reference)

    def step(self, action):
        """Returns ``(next_state, reward, terminated, truncated)``."""
        action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        prev = self.state[2:4].copy()
        nxt, terminated = step(self.state, action, self.config, self.rhs)
        r = reward(nxt, prev, self.reference, self.reward_config, terminated)
        self.state = nxt
        self.steps += 1
        truncated = self.steps >= self.config.max_steps and not terminated
        return nxt.copy(), r, terminated, truncated


def simulate(rhs, x0, controls, dt, substep=None, blowup=None):
    """Open-loop zero-order-hold rollout.

    Returns ``(states, completed)`` where ``states`` has one row per control
    sample (``states[k]`` is the state at which ``controls[k]`` is applied).
    With ``blowup`` set, stops early once any state magnitude exceeds it or
    turns non-finite, and ``completed`` is False.
    """
    controls = np.asarray(controls, dtype=float)
    substep = substep or dt
    n_sub = max(1, int(round(dt / substep)))
    h = dt / n_sub
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((len(controls), x.size))
    for k, u in enumerate(controls):
        out[k] = x
        if blowup is not None and not (np.all(np.isfinite(x)) and np.max(np.abs(x)) <= blowup):
            return out[:k], False
        for _ in range(n_sub):
            x = rk4_step(rhs, x, u, h)
    return out, True


def with_initial_state(config: EnvConfig, state) -> EnvConfig:
    return replace(config, initial_state=tuple(state))


__all__ = [
    "BirotorEnv", "EnvConfig", "RewardConfig", "SparseDynamics", "InvalidInputError",
    "NumericalBlowupError", "TABLE2_COEFFICIENTS", "derivative", "ground_truth_xi",
    "integrate", "observe", "out_of_bounds", "reset", "reward", "rk4_step", "simulate",
    "step", "with_initial_state",
]
