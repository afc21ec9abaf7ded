"""Dyna-style training: real TD3 episodes interleaved with SINDy model rollouts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .library import FeatureLibrary, full_library, identified_library
from .plant import BirotorEnv, observe, out_of_bounds, reward, rk4_step, simulate
from .signals import ChirpConfig, TrajectoryDataset, generate_excitation
from .sindy import (
    BLOWUP_LIMIT, DegenerateFitError, SindyModel, StlsqConfig, fit_transitions,
    model_reward_error,
)
from .td3 import REAL, SYNTHETIC, ReplayBuffer, Td3Agent, Td3Config, decay_sigma, select_action, update

log = logging.getLogger(__name__)

LIBRARIES = {"identified": identified_library, "full": full_library}


@dataclass(frozen=True)
class DynaConfig:
    planning_period: int = 10
    rollouts_per_planning: int = 400
    rollout_horizon: int = 10
    refit_window: int = 20_000
    # None: 5% (gate_fraction) of the mean |episode return| over the last period
    model_error_gate: float | None = None
    gate_fraction: float = 0.05
    # extra TD3 updates per injected synthetic transition, spread evenly over
    # the real steps of the following planning period
    planning_update_ratio: float = 0.1
    total_episodes: int = 300
    seed: int = 0
    reference_range: float = 0.5
    avg_window: int = 10
    error_episodes: int = 1
    library: str = "identified"

    def __post_init__(self):
        if self.planning_period < 1 or self.rollout_horizon < 1:
            raise ValueError("planning_period and rollout_horizon must be >= 1")
        if self.rollouts_per_planning < 0 or self.total_episodes < 0:
            raise ValueError("counts must be non-negative")
        if self.model_error_gate is not None and self.model_error_gate < 0:
            raise ValueError("model_error_gate must be >= 0")
        if self.planning_update_ratio < 0 or self.gate_fraction < 0:
            raise ValueError("ratios must be non-negative")
        if self.library not in LIBRARIES:
            raise ValueError(f"library must be one of {sorted(LIBRARIES)}")


@dataclass
class TrainingLog:
    reward: list = field(default_factory=list)
    avg_reward: list = field(default_factory=list)
    model_error: list = field(default_factory=list)
    real_steps: list = field(default_factory=list)
    synthetic_steps: list = field(default_factory=list)
    sigma: list = field(default_factory=list)

    COLUMNS = ("reward", "avg_reward", "model_error", "real_steps", "synthetic_steps", "sigma")

    def __len__(self):
        return len(self.reward)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("episode," + ",".join(self.COLUMNS) + "\n")
            for i in range(len(self)):
                row = [getattr(self, c)[i] for c in self.COLUMNS]
                fh.write(f"{i}," + ",".join(
                    str(v) if isinstance(v, (int, np.integer)) else f"{v:.17g}" for v in row
                ) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TrainingLog":
        out = cls()
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header != ["episode", *cls.COLUMNS]:
                raise ValueError(f"unexpected training-log header {header}")
            for line in fh:
                parts = line.strip().split(",")
                for name, val in zip(cls.COLUMNS, parts[1:]):
                    getattr(out, name).append(
                        int(val) if name.endswith("steps") else float(val)
                    )
        return out

    def episodes_to_threshold(self, threshold: float, window: int = 1) -> int | None:
        """First episode (1-based count) whose moving average reaches ``threshold``.

        Episodes before the first full ``window`` are skipped: an average over
        one or two episodes says little when returns depend on the reference.
        """
        for i in range(max(window, 1) - 1, len(self.avg_reward)):
            if self.avg_reward[i] >= threshold:
                return i + 1
        return None


def collect_initial_data(env: BirotorEnv, chirp_cfg: ChirpConfig | None = None) -> TrajectoryDataset:
    """Open-loop chirp excitation of the plant from its initial state.

    The sample count is ``floor(t_span / dt)``; the trajectory is not cut at the
    angle bounds. Rewards are scored against a zero reference.
    """
    chirp_cfg = chirp_cfg or ChirpConfig()
    if chirp_cfg.n_samples < 1:
        raise ValueError("chirp duration yields an empty dataset")
    times, controls = generate_excitation(chirp_cfg)
    substep = min(env.config.integrator_substep_dt, chirp_cfg.dt)
    x0 = np.array(env.config.initial_state)
    states, completed = simulate(env.rhs, x0, controls, chirp_cfg.dt, substep, blowup=BLOWUP_LIMIT)
    if not completed:
        raise FloatingPointError("plant diverged during data collection")
    prev = np.vstack([x0[2:4], states[:-1, 2:4]])
    rewards = reward(states, prev, np.zeros(2), env.reward_config,
                     out_of_bounds(states, env.config))
    return TrajectoryDataset(times, states, controls, rewards=rewards)


def push_dataset(buffer: ReplayBuffer, data: TrajectoryDataset, env: BirotorEnv, segment=0):
    """Store consecutive samples of a recording as real transitions (reference zero)."""
    s, nxt = data.states[:-1], data.states[1:]
    n = len(s)
    done = out_of_bounds(nxt, env.config)
    r = reward(nxt, s[:, 2:4], np.zeros(2), env.reward_config, done)
    buffer.push_many(
        state=s, action=np.clip(data.inputs[:-1], -1, 1), reward=r, next_state=nxt,
        done=done, origin=np.full(n, REAL), reference=np.zeros((n, 2)),
        dt=np.full(n, data.dt), segment=np.full(n, segment),
    )


def refit_model(buffer: ReplayBuffer, library: FeatureLibrary, stlsq_cfg: StlsqConfig,
                window: int, previous: SindyModel | None = None):
    """Refit on the most recent ``window`` real transitions.

    Every transition is differenced on its own (state, next state) pair, so no
    difference spans an episode boundary. Returns ``(model, ok)``; on too
    little data or a degenerate fit the previous model comes back with
    ``ok=False``.
    """
    batch = buffer.recent_real(window)
    if batch.size < 2 * len(library):
        log.warning("refit skipped: only %d real transitions", batch.size)
        return previous, False
    try:
        model = fit_transitions(batch.state, batch.action, batch.next_state, batch.dt,
                                library, stlsq_cfg)
    except DegenerateFitError as exc:
        log.warning("refit failed (%s); keeping previous model", exc)
        return previous, False
    return model, True


def plan_rollouts(model: SindyModel, agent: Td3Agent, buffer: ReplayBuffer, cfg: DynaConfig,
                  rng, env: BirotorEnv, sigma: float) -> dict:
    """Short model rollouts from real start states under the noisy current policy.

    All rollouts advance together as one batch. A rollout stops after a
    terminal (out-of-bounds) step, and is truncated before any step whose
    state leaves the blowup limit or turns non-finite. Returns column arrays
    ready for :meth:`ReplayBuffer.push_many`, ordered by rollout then step.
    """
    n = cfg.rollouts_per_planning
    H = cfg.rollout_horizon
    empty = {k: np.zeros((0, *s)) for k, s in
             [("state", (6,)), ("action", (2,)), ("reward", ()), ("next_state", (6,)),
              ("done", ()), ("origin", ()), ("reference", (2,)), ("dt", ()), ("segment", ())]}
    if n == 0:
        return empty
    real = buffer.real_indices()
    if real.size == 0:
        raise ValueError("planning needs at least one real transition in the buffer")
    # Prefer closed-loop episode data; fall back to whatever is real.
    seg = buffer.get(real).segment
    episodic = real[seg > 0]
    pool = episodic if episodic.size else real
    start = buffer.get(pool[rng.integers(0, pool.size, size=n)])
    x = start.state.copy()
    ref = start.reference.copy()
    dt = env.config.control_dt
    n_sub = int(round(dt / env.config.integrator_substep_dt))
    h = dt / n_sub
    alive = np.ones(n, dtype=bool)
    cols = {k: [] for k in ("state", "action", "reward", "next_state", "done", "reference", "origin")}
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(H):
            obs = observe(x, ref)
            a = select_action(agent.actor, obs, sigma, rng)
            nxt = x
            for _ in range(n_sub):
                nxt = rk4_step(model.rhs, nxt, a, h)
            ok = np.all(np.isfinite(nxt), axis=1) & (np.max(np.abs(nxt), axis=1) <= BLOWUP_LIMIT)
            alive &= ok
            done = out_of_bounds(nxt, env.config)
            safe_next = np.where(alive[:, None], nxt, x)
            r = reward(safe_next, x[:, 2:4], ref, env.reward_config, done)
            for k, v in (("state", x), ("action", a), ("reward", r), ("next_state", safe_next),
                         ("done", done), ("reference", ref)):
                cols[k].append(v)
            cols["origin"].append(alive.copy())  # temporarily the validity mask
            alive &= ~done
            x = safe_next
            if not alive.any():
                break
    valid = np.stack(cols.pop("origin"), axis=1)  # (n, steps)
    out = {k: np.stack(v, axis=1)[valid] for k, v in cols.items()}
    m = int(valid.sum())
    out["origin"] = np.full(m, SYNTHETIC)
    out["dt"] = np.full(m, dt)
    out["segment"] = np.full(m, -1)
    return out


def _moving_average(values, window):
    tail = values[-window:]
    return float(np.mean(tail))


def train(env: BirotorEnv, agent: Td3Agent, dyna_cfg: DynaConfig, td3_cfg: Td3Config | None = None,
          rng=None, stlsq_cfg: StlsqConfig | None = None, chirp_cfg: ChirpConfig | None = None,
          callback=None):
    """Run the full loop; returns ``(agent, log, model)``.

    ``callback(episode, log)`` is invoked after every episode if given.
    """
    td3_cfg = td3_cfg or agent.cfg
    rng = rng if rng is not None else np.random.default_rng(dyna_cfg.seed)
    stlsq_cfg = stlsq_cfg or StlsqConfig()
    library = LIBRARIES[dyna_cfg.library]()
    buffer = ReplayBuffer(td3_cfg.buffer_capacity)
    history = TrainingLog()

    initial = collect_initial_data(env, chirp_cfg)
    push_dataset(buffer, initial, env, segment=0)
    model, _ = refit_model(buffer, library, stlsq_cfg, dyna_cfg.refit_window)
    synthetic_steps = 0
    real_steps = 0
    extra_rate, extra_due = 0.0, 0.0
    sigma0 = td3_cfg.exploration_sigma
    lo, hi = -dyna_cfg.reference_range, dyna_cfg.reference_range

    for episode in range(dyna_cfg.total_episodes):
        sigma = decay_sigma(sigma0, td3_cfg, episode)
        ref = rng.uniform(lo, hi, size=2)
        state = env.reset(ref)
        total = 0.0
        for _ in range(env.config.max_steps):
            obs = observe(state, ref)
            action = select_action(agent.actor, obs, sigma, rng)
            nxt, r, terminated, _ = env.step(action)
            buffer.push_many(
                state=state[None], action=action[None], reward=[r], next_state=nxt[None],
                done=[terminated], origin=[REAL], reference=ref[None],
                dt=[env.config.control_dt], segment=[episode + 1],
            )
            update(agent, buffer, rng)
            extra_due += extra_rate
            while extra_due >= 1.0:
                update(agent, buffer, rng)
                extra_due -= 1.0
            total += r
            real_steps += 1
            state = nxt
            if terminated:
                break

        history.reward.append(total)
        history.avg_reward.append(_moving_average(history.reward, dyna_cfg.avg_window))
        model_error = math.nan

        if (episode + 1) % dyna_cfg.planning_period == 0:
            extra_rate = 0.0
            candidate, ok = refit_model(buffer, library, stlsq_cfg, dyna_cfg.refit_window, model)
            err_seed = dyna_cfg.seed * 100_003 + episode
            model_error = math.inf if model is None else _score(model, env, agent, dyna_cfg, err_seed)
            if ok and candidate is not model:
                cand_error = _score(candidate, env, agent, dyna_cfg, err_seed)
                if cand_error <= model_error:
                    model, model_error = candidate, cand_error
            gate = dyna_cfg.model_error_gate
            if gate is None:
                recent = history.reward[-dyna_cfg.planning_period:]
                gate = dyna_cfg.gate_fraction * float(np.mean(np.abs(recent)))
            if model is not None and dyna_cfg.rollouts_per_planning > 0 and model_error <= gate:
                synth = plan_rollouts(model, agent, buffer, dyna_cfg, rng, env, sigma)
                buffer.push_many(**synth)
                synthetic_steps += len(synth["reward"])
                budget = dyna_cfg.planning_update_ratio * len(synth["reward"])
                extra_rate = budget / (dyna_cfg.planning_period * env.config.max_steps)

        history.model_error.append(model_error)
        history.real_steps.append(real_steps)
        history.synthetic_steps.append(synthetic_steps)
        history.sigma.append(sigma)
        if callback is not None:
            callback(episode, history)
    return agent, history, model


def _score(model, env, agent, cfg, seed):
    return model_reward_error(model, env, agent.policy, cfg.error_episodes, seed)
