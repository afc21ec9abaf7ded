"""Twin Delayed DDPG on top of :mod:`dynasindy.neural`, plus the replay buffer.

Transitions carry raw plant states and the episode reference; observations
for the networks are formed at sample time with :func:`dynasindy.plant.observe`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from .neural import (
    AdamState, Network, adam_from_lines, adam_step, adam_to_lines, backward, forward,
    init_network, network_from_lines, network_to_lines, polyak_update,
)
from .plant import observe

OBS_DIM = 6
ACTION_DIM = 2


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.995
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    batch_size: int = 512
    buffer_capacity: int = 2_000_000
    exploration_sigma: float = 0.15
    sigma_decay: float = 1e-3
    sigma_min: float = 0.01
    policy_delay: int = 10
    target_smoothing: bool = True
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    hidden1: int = 400
    hidden2: int = 300
    leaky_slope: float = 0.01

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ValueError("need 1 <= batch_size <= buffer_capacity")
        if min(self.exploration_sigma, self.sigma_min, self.target_noise_sigma,
               self.target_noise_clip, self.sigma_decay) < 0:
            raise ValueError("noise parameters must be non-negative")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be at least 1")


REAL, SYNTHETIC = 0, 1


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    origin: int = REAL
    reference: tuple = (0.0, 0.0)
    dt: float = 0.05
    segment: int = 0

    def __post_init__(self):
        if np.any(np.abs(self.action) > 1.0):
            raise ValueError("action outside [-1, 1]")
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")


class Batch(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    done: np.ndarray
    origin: np.ndarray
    reference: np.ndarray
    dt: np.ndarray
    segment: np.ndarray

    @property
    def obs(self):
        return observe(self.state, self.reference)

    @property
    def next_obs(self):
        return observe(self.next_state, self.reference)

    @property
    def size(self) -> int:
        return len(self.reward)


_COLUMNS = {
    "state": 6, "action": ACTION_DIM, "reward": 0, "next_state": 6, "done": 0,
    "origin": 0, "reference": 2, "dt": 0, "segment": 0,
}
_DTYPES = {"origin": np.int8, "segment": np.int64, "done": bool}


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling (with replacement).

    Storage grows geometrically up to ``capacity`` so a large nominal
    capacity costs nothing until it is used.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._alloc = 0
        self._data: dict[str, np.ndarray] = {}
        self._grow(min(self.capacity, 1024))
        self.size = 0
        self.pos = 0
        self.n_real = 0
        self.n_synthetic = 0
        self.total_pushed = 0

    def _grow(self, n):
        new = {}
        for name, width in _COLUMNS.items():
            shape = (n, width) if width else (n,)
            arr = np.zeros(shape, dtype=_DTYPES.get(name, float))
            if self._alloc:
                arr[: self._alloc] = self._data[name]
            new[name] = arr
        self._data = new
        self._alloc = n

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        self.push_many(
            state=[t.state], action=[t.action], reward=[t.reward], next_state=[t.next_state],
            done=[t.done], origin=[t.origin], reference=[t.reference], dt=[t.dt],
            segment=[t.segment],
        )

    def push_many(self, **cols):
        """Append a block of transitions given column arrays (keys as in :class:`Batch`)."""
        n = len(cols["reward"])
        if n == 0:
            return
        cols = {k: np.asarray(cols[k]) for k in _COLUMNS}
        if np.any(np.abs(cols["action"]) > 1.0):
            raise ValueError("action outside [-1, 1]")
        if not np.all(np.isfinite(cols["reward"])):
            raise ValueError("rewards must be finite")
        if n > self.capacity:
            cols = {k: v[-self.capacity:] for k, v in cols.items()}
            n = self.capacity
        needed = min(self.capacity, self.size + n)
        if needed > self._alloc and self._alloc < self.capacity:
            self._grow(min(self.capacity, max(needed, 2 * self._alloc)))
        idx = (self.pos + np.arange(n)) % self.capacity
        n_evicted = max(0, self.size + n - self.capacity)
        if n_evicted:
            evicted = idx[n - n_evicted:]
            evicted_syn = int(np.sum(self._data["origin"][evicted] == SYNTHETIC))
            self.n_synthetic -= evicted_syn
            self.n_real -= len(evicted) - evicted_syn
        for k, v in cols.items():
            self._data[k][idx] = v
        syn = int(np.sum(cols["origin"] == SYNTHETIC))
        self.n_synthetic += syn
        self.n_real += n - syn
        self.pos = (self.pos + n) % self.capacity
        self.size = min(self.capacity, self.size + n)
        self.total_pushed += n

    def _chronological(self):
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.pos + np.arange(self.capacity)) % self.capacity

    def get(self, idx) -> Batch:
        return Batch(**{k: self._data[k][idx] for k in _COLUMNS})

    def sample(self, batch_size: int, rng) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.get(rng.integers(0, self.size, size=batch_size))

    def recent_real(self, n: int) -> Batch:
        """The ``n`` most recently inserted real transitions, oldest first."""
        order = self._chronological()
        real = order[self._data["origin"][order] == REAL]
        return self.get(real[-n:] if n > 0 else real[:0])

    def real_indices(self) -> np.ndarray:
        return np.flatnonzero(self._data["origin"][: self.size] == REAL)


# -- agent -----------------------------------------------------------------

class Td3Agent:
    def __init__(self, cfg: Td3Config, rng):
        self.cfg = cfg
        h = (cfg.hidden1, cfg.hidden2)
        acts = ["leaky_relu", "leaky_relu"]
        self.actor = init_network((OBS_DIM, *h, ACTION_DIM), acts + ["tanh"], rng,
                                  cfg.leaky_slope, final_scale=1e-3)
        self.critics = [
            init_network((OBS_DIM + ACTION_DIM, *h, 1), acts + ["linear"], rng, cfg.leaky_slope)
            for _ in range(2)
        ]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = AdamState.zeros_like(self.actor.params)
        self.critic_opts = [AdamState.zeros_like(c.params) for c in self.critics]
        self.n_updates = 0

    def policy(self, obs) -> np.ndarray:
        return forward(self.actor, obs)

    def __call__(self, obs):
        return self.policy(obs)

    def networks(self) -> dict:
        return {
            "actor": self.actor, "actor_target": self.actor_target,
            "critic1": self.critics[0], "critic2": self.critics[1],
            "critic1_target": self.critic_targets[0], "critic2_target": self.critic_targets[1],
        }

    def __eq__(self, other):
        if not isinstance(other, Td3Agent):
            return NotImplemented
        return (
            self.cfg == other.cfg
            and self.n_updates == other.n_updates
            and all(a == b for a, b in zip(self.networks().values(), other.networks().values()))
            and self.actor_opt == other.actor_opt
            and all(a == b for a, b in zip(self.critic_opts, other.critic_opts))
        )


def select_action(actor: Network, obs, sigma: float, rng) -> np.ndarray:
    """Actor output plus Gaussian exploration noise, clipped to [-1, 1]."""
    a = forward(actor, obs)
    if sigma > 0:
        a = a + rng.normal(0.0, sigma, size=np.shape(a))
    return np.clip(a, -1.0, 1.0)


def _q(critic: Network, obs, action):
    return forward(critic, np.concatenate([obs, action], axis=-1))[..., 0]


def critic_target(batch: Batch, target_actor: Network, target_critics, cfg: Td3Config, rng):
    """Clipped double-Q bootstrap target ``r + gamma * (1 - done) * min(Q1', Q2')``."""
    if batch.size == 0:
        raise ValueError("empty batch")
    next_obs = batch.next_obs
    a = forward(target_actor, next_obs)
    if cfg.target_smoothing and cfg.target_noise_sigma > 0:
        noise = rng.normal(0.0, cfg.target_noise_sigma, size=a.shape)
        a = a + np.clip(noise, -cfg.target_noise_clip, cfg.target_noise_clip)
    a = np.clip(a, -1.0, 1.0)
    q = np.minimum(_q(target_critics[0], next_obs, a), _q(target_critics[1], next_obs, a))
    return batch.reward + cfg.gamma * (1.0 - batch.done) * q


def critic_step(agent: Td3Agent, batch: Batch, y) -> float:
    """One Adam step of both critics towards ``y``; returns the mean of their MSE losses."""
    x = np.concatenate([batch.obs, batch.action], axis=1)
    losses = []
    for critic, opt in zip(agent.critics, agent.critic_opts):
        q, cache = forward(critic, x, return_cache=True)
        err = q[:, 0] - y
        losses.append(float(np.mean(err * err)))
        grads, _ = backward(critic, x, (2.0 / len(y)) * err[:, None], cache)
        adam_step(critic.params, grads, opt, agent.cfg.critic_lr)
    return float(np.mean(losses))


def actor_step(agent: Td3Agent, batch: Batch) -> float:
    """Ascend ``Q1(s, actor(s))``; returns the actor loss ``-mean(Q1)``."""
    obs = batch.obs
    a, a_cache = forward(agent.actor, obs, return_cache=True)
    x = np.concatenate([obs, a], axis=1)
    q, q_cache = forward(agent.critics[0], x, return_cache=True)
    n = len(obs)
    _, dq_dx = backward(agent.critics[0], x, np.full((n, 1), -1.0 / n), q_cache)
    grads, _ = backward(agent.actor, obs, dq_dx[:, OBS_DIM:], a_cache)
    adam_step(agent.actor.params, grads, agent.actor_opt, agent.cfg.actor_lr)
    return -float(np.mean(q))


def soft_update_targets(agent: Td3Agent):
    polyak_update(agent.actor_target, agent.actor, agent.cfg.tau)
    for t, c in zip(agent.critic_targets, agent.critics):
        polyak_update(t, c, agent.cfg.tau)


def update(agent: Td3Agent, buffer: ReplayBuffer, rng, batch: Batch | None = None):
    """One TD3 iteration.

    Returns ``None`` when the buffer holds fewer than ``batch_size`` entries
    (and no explicit ``batch`` is given), otherwise ``(critic_loss, actor_loss)``
    where ``actor_loss`` is ``None`` on non-delayed iterations.
    """
    cfg = agent.cfg
    if batch is None:
        if len(buffer) < cfg.batch_size:
            return None
        batch = buffer.sample(cfg.batch_size, rng)
    y = critic_target(batch, agent.actor_target, agent.critic_targets, cfg, rng)
    critic_loss = critic_step(agent, batch, y)
    agent.n_updates += 1
    actor_loss = None
    if agent.n_updates % cfg.policy_delay == 0:
        actor_loss = actor_step(agent, batch)
        soft_update_targets(agent)
    return critic_loss, actor_loss


def decay_sigma(sigma0: float, cfg: Td3Config, episode: int) -> float:
    return max(cfg.sigma_min, sigma0 * (1.0 - cfg.sigma_decay) ** episode)


# -- checkpoints -----------------------------------------------------------

def save_agent(agent: Td3Agent, path):
    lines = ["td3-agent v1", "[config]"]
    lines += [f"{k} = {v!r}" for k, v in asdict(agent.cfg).items()]
    lines.append(f"[counters]\nn_updates = {agent.n_updates}")
    for name, net in agent.networks().items():
        lines.append(f"[network {name}]")
        lines += network_to_lines(net)
    for name, opt in [("actor", agent.actor_opt), ("critic1", agent.critic_opts[0]),
                      ("critic2", agent.critic_opts[1])]:
        lines.append(f"[adam {name}]")
        lines += adam_to_lines(opt)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_agent(path) -> Td3Agent:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines[0].strip() != "td3-agent v1":
        raise ValueError("not a td3-agent v1 checkpoint")
    types = {f.name: f.type for f in fields(Td3Config)}
    cfg_vals, pos = {}, 2
    while not lines[pos].startswith("["):
        key, val = (p.strip() for p in lines[pos].split("=", 1))
        cfg_vals[key] = _parse_literal(val, types[key])
        pos += 1
    cfg = Td3Config(**cfg_vals)
    agent = Td3Agent.__new__(Td3Agent)
    agent.cfg = cfg
    nets, opts = {}, {}
    while pos < len(lines):
        head = lines[pos].strip()
        pos += 1
        if head == "[counters]":
            agent.n_updates = int(lines[pos].split("=")[1])
            pos += 1
        elif head.startswith("[network "):
            net, used = network_from_lines(lines[pos:])
            nets[head[9:-1]] = net
            pos += used
        elif head.startswith("[adam "):
            opt, used = adam_from_lines(lines[pos:])
            opts[head[6:-1]] = opt
            pos += used
        elif head:
            raise ValueError(f"unexpected section {head!r}")
    agent.actor, agent.actor_target = nets["actor"], nets["actor_target"]
    agent.critics = [nets["critic1"], nets["critic2"]]
    agent.critic_targets = [nets["critic1_target"], nets["critic2_target"]]
    agent.actor_opt = opts["actor"]
    agent.critic_opts = [opts["critic1"], opts["critic2"]]
    return agent


def _parse_literal(text: str, typ):
    name = typ if isinstance(typ, str) else typ.__name__
    if name == "bool":
        return text == "True"
    if name == "int":
        return int(text)
    return float(text)
