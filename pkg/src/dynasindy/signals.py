"""Excitation signals and trajectory files."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CSV_HEADER = ["t", "x1", "x2", "x3", "x4", "x5", "x6", "u1", "u2", "reward"]


class TrajectoryParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass
class TrajectoryDataset:
    """Uniformly sampled states and inputs; ``inputs[k]`` is held from ``times[k]``."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    derivatives: np.ndarray | None = None
    rewards: np.ndarray | None = None
    blowup: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        n = self.times.size
        self.states = _rows(self.states, n, 6)
        self.inputs = _rows(self.inputs, n, 2)
        if self.derivatives is not None:
            self.derivatives = np.asarray(self.derivatives, dtype=float).reshape(self.states.shape)
        if self.rewards is not None:
            self.rewards = np.asarray(self.rewards, dtype=float).reshape(n)
        if n > 2:
            gaps = np.diff(self.times)
            if np.any(gaps <= 0):
                raise ValueError("times must be strictly increasing")
            if np.max(np.abs(gaps - gaps[0])) > 1e-9 * abs(gaps[0]) * max(1.0, n):
                raise ValueError("times must be uniformly spaced")

    def __len__(self):
        return self.times.size

    @property
    def dt(self) -> float:
        if len(self) < 2:
            raise ValueError("sample period undefined for fewer than two samples")
        return float((self.times[-1] - self.times[0]) / (len(self) - 1))


def _rows(a, n, width):
    a = np.asarray(a, dtype=float)
    return a.reshape(n, -1) if n else a.reshape(0, a.shape[-1] if a.ndim == 2 else width)


def chirp(t, t_span):
    """``cos(pi * t / t_span * (1 - t / t_span))`` on ``0 <= t <= t_span``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > t_span):
        raise ValueError(f"chirp time outside [0, {t_span}]")
    out = np.cos(math.pi * t * (1.0 / t_span) * (1.0 - t / t_span))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ChirpConfig:
    """Two-channel chirp; channel 2 is shifted by a quarter period by default."""

    t_span: float = 10.0
    dt: float = 0.01
    scale: tuple = (1.0, 1.0)
    offset: tuple | None = None

    def __post_init__(self):
        if self.t_span <= 0 or self.dt <= 0 or self.dt > self.t_span:
            raise ValueError("need t_span > 0 and 0 < dt <= t_span")
        if any(abs(s) > 1.0 for s in self.scale):
            raise ValueError("chirp scale beyond 1 would exceed the actuator range")
        if self.offset is None:
            object.__setattr__(self, "offset", (0.0, self.t_span / 4))

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.t_span / self.dt + 1e-9))


def generate_excitation(cfg: ChirpConfig):
    """Sample times and the ``(n, 2)`` input sequence.

    Shifted channels wrap around the sweep period.
    """
    t = np.arange(cfg.n_samples) * cfg.dt
    channels = [
        s * chirp(np.mod(t + off, cfg.t_span), cfg.t_span) for s, off in zip(cfg.scale, cfg.offset)
    ]
    return t, np.stack(channels, axis=1)


def write_trajectory_csv(path, data: TrajectoryDataset):
    rewards = data.rewards if data.rewards is not None else np.full(len(data), np.nan)
    with open(path, "w") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for k in range(len(data)):
            row = [data.times[k], *data.states[k], *data.inputs[k], rewards[k]]
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def read_trajectory_csv(path) -> TrajectoryDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or [h.strip() for h in lines[0].split(",")] != CSV_HEADER:
        raise TrajectoryParseError(1, f"header must be {','.join(CSV_HEADER)}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(CSV_HEADER):
            raise TrajectoryParseError(lineno, f"expected {len(CSV_HEADER)} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise TrajectoryParseError(lineno, str(exc)) from None
    arr = np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER))
    rewards = arr[:, 9]
    return TrajectoryDataset(
        arr[:, 0], arr[:, 1:7], arr[:, 7:9],
        rewards=None if np.all(np.isnan(rewards)) else rewards,
    )
