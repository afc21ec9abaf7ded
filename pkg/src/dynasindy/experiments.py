"""Glue between configuration files and the training/evaluation code."""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig
from .dyna import TrainingLog, train
from .plant import BirotorEnv
from .scenarios import Scenario, run_scenario
from .td3 import Td3Agent


def make_env(cfg: ExperimentConfig) -> BirotorEnv:
    return BirotorEnv(cfg.env, cfg.reward)


def run_training(cfg: ExperimentConfig, callback=None):
    """Train from scratch; returns ``(agent, log, model)``.

    One generator seeded with ``cfg.dyna.seed`` drives network initialisation
    and every random draw of the loop, so equal configs give equal logs.
    """
    rng = np.random.default_rng(cfg.dyna.seed)
    agent = Td3Agent(cfg.td3, rng)
    return train(make_env(cfg), agent, cfg.dyna, cfg.td3, rng=rng, stlsq_cfg=cfg.stlsq,
                 chirp_cfg=cfg.chirp, callback=callback)


def evaluate(agent: Td3Agent, cfg: ExperimentConfig, scenario: Scenario | str = "step"):
    """Deterministic rollout of ``agent`` on a scenario; see :func:`run_scenario`."""
    if isinstance(scenario, str):
        scenario = Scenario.default(scenario)
    return run_scenario(agent.policy, make_env(cfg), scenario)


def learning_curves(logs: list[TrainingLog]) -> np.ndarray:
    """Moving-average rewards stacked as ``(episodes, runs)``."""
    return np.column_stack([log.avg_reward for log in logs])
