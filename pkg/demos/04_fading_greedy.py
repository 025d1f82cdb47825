"""Per-step allocation over fading channels keeps the error at the target."""

import numpy as np

from snkf.core import SensorSet, SystemModel, validate_scenario
from snkf.fading import FadingModel, GreedyRunConfig, simulate_greedy

model = SystemModel(0.9, 1.0)
sensors = SensorSet([1.0, 0.8, 1.2], [1.0, 0.8, 1.0])
sc = validate_scenario(model, sensors, np.ones(3), 0.05)
fading = FadingModel([1.0, 1.3, 1.6], [0.5, 0.8, 1.0])

run = simulate_greedy(sc, fading, GreedyRunConfig(200, D=2.0, seed=4))
power = np.sum(run.alphas**2 * (sensors.c**2 * model.state_variance + sensors.sigma_v2), axis=1)
print(f"max P after the first step {run.trace.P[1:].max():.10f}")
print(f"mean power per step {power.mean():.4f}, spread {power.std():.4f}")
print(f"infeasible steps {run.infeasible_steps}")
