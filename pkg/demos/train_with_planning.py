"""
Real episodes versus real episodes plus model rollouts
======================================================

Train two small agents with the same seed, one with 400 short rollouts of the
identified model every ten episodes. Takes a few minutes on one core.
"""

import sys

import numpy as np

from dynasindy import ExperimentConfig, run_training

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 100

# Small networks and 5 s episodes keep this quick.
base = ExperimentConfig().with_values(
    hidden1=64, hidden2=64, batch_size=64, max_steps=100, gamma=0.99,
    actor_lr=1e-3, critic_lr=1e-3, policy_delay=2, planning_update_ratio=1.0,
    total_episodes=episodes, avg_window=20, seed=0,
)

logs = {}
for rollouts in (0, 400):
    _, log, model = run_training(base.with_values(rollouts_per_planning=rollouts))
    logs[rollouts] = log
    print(f"rollouts {rollouts}: {log.real_steps[-1]} real steps, "
          f"{log.synthetic_steps[-1]} synthetic transitions")

# Moving-average return every ten episodes.
print("\nepisode   no planning   planning")
for k in range(9, episodes, 10):
    print(f"{k + 1:7d} {logs[0].avg_reward[k]:13.1f} {logs[400].avg_reward[k]:10.1f}")

# Model error is only measured on planning episodes.
err = np.array(logs[400].model_error)
print("\nmodel reward error at refits:", np.round(err[~np.isnan(err)], 2))
