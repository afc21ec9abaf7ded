"""
Tracking step, sine and square references
=========================================

Evaluate a hand-tuned PD law on the three reference scenarios, then save
and reload its trace through the CSV format.
"""

import tempfile
from pathlib import Path

import numpy as np

from dynasindy import BirotorEnv, Scenario, read_trajectory_csv, run_scenario, write_trajectory_csv


def pd_policy(obs):
    # obs = (e_azimuth, azimuth rate, tail rotor / 1000, e_pitch, pitch rate, main rotor / 1000)
    # Feedforward terms hold the beam level against gravity and rotor torque.
    return np.clip([-0.128 + 3 * obs[0] - 1.5 * obs[1], 0.36 + obs[3] - obs[4]], -1, 1)


print("scenario  steady az  steady pitch  rmse az  rmse pitch  overshoot az")
for kind in ("step", "sine", "square"):
    data, m, refs = run_scenario(pd_policy, BirotorEnv(), Scenario.default(kind))
    print(f"{kind:8s} {m.steady_state_error[0]:10.4f} {m.steady_state_error[1]:13.4f} "
          f"{m.rmse[0]:8.4f} {m.rmse[1]:11.4f} {m.overshoot[0]:13.3f}")

# Traces use the same CSV layout as recorded plant data.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "square.csv"
    write_trajectory_csv(path, data)
    back = read_trajectory_csv(path)
    print(f"\nreloaded {len(back)} rows; max state difference {np.abs(back.states - data.states).max():.1e}")
