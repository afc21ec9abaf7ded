"""Sparse model identification and model-based TD3 control of a bi-rotor."""

from .config import ExperimentConfig, load_config, parse_config
from .dyna import DynaConfig, TrainingLog, collect_initial_data, plan_rollouts, refit_model, train
from .library import Feature, FeatureLibrary, full_library, identified_library, polynomial_library
from .experiments import evaluate, run_training
from .plant import (
    BirotorEnv, EnvConfig, RewardConfig, derivative, ground_truth_xi, observe, reward, step,
)
from .scenarios import Scenario, TrackingMetrics, compute_metrics, run_scenario
from .signals import (
    ChirpConfig, TrajectoryDataset, chirp, generate_excitation, read_trajectory_csv,
    write_trajectory_csv,
)
from .sindy import (
    SindyModel, StlsqConfig, fit_sindy, fit_transitions, load_model, save_model, simulate_model,
    stlsq,
)
from .td3 import (
    ReplayBuffer, Td3Agent, Td3Config, load_agent, save_agent, select_action, update,
)

__version__ = "0.1.0"
