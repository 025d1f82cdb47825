"""Filtering with only channel statistics, compared against full channel knowledge."""

import numpy as np

from snkf.core import SensorSet, SystemModel
from snkf.nocsi import ChannelStatistics, build_effective_model, simulate_nocsi, steady_state_nocsi

model = SystemModel(0.9, 1.0)
sensors = SensorSet([1.0, 0.8, 1.2], [0.5, 1.0, 0.3])
alphas = np.array([0.6, 0.9, 0.4])

for spread in (0.0, 0.05, 0.25, 1.0):
    stats = ChannelStatistics([0.8, 0.7, 0.9], [0.6, 0.7, 0.5], [spread] * 3, [spread] * 3)
    eff = build_effective_model(model, sensors, stats, alphas, 0.1)
    P = steady_state_nocsi(eff, model)
    run = simulate_nocsi(model, sensors, stats, alphas, 0.1, 20_000, rng=5)
    mse = np.mean(run.errors[500:] ** 2)
    print(f"channel variance {spread:4.2f}: predicted P {P:.4f}, simulated MSE {mse:.4f}")
