"""Optimal versus equal amplification for a target error and for a power budget."""

import numpy as np

from snkf.alloc import build_problem, equal_power_solution, solve
from snkf.core import SensorSet, SystemModel
from snkf.kalman import steady_state_from_snr

rng = np.random.default_rng(3)
model = SystemModel(0.9, 1.0)
M = 8
sensors = SensorSet(np.ones(M), rng.chisquare(1, M))
h = rng.uniform(20, 100, M) ** -2.0

for scheme in ("mac", "orth"):
    target = build_problem(model, sensors, h, 1e-9, D=2.0, scheme=scheme)
    opt, eq = solve(target), equal_power_solution(target)
    print(f"{scheme:>4}: power for P <= 2   optimal {opt.total_power:.3e}   equal {eq.total_power:.3e}")
    budget = build_problem(model, sensors, h, 1e-9, gamma_total=1e-3, scheme=scheme)
    p_opt = steady_state_from_snr(solve(budget).snr, model)
    p_eq = steady_state_from_snr(equal_power_solution(budget).snr, model)
    print(f"{scheme:>4}: P under budget 1e-3  optimal {p_opt:.4f}      equal {p_eq:.4f}")
    print(f"      sensors switched on: {np.count_nonzero(solve(budget).alphas)} of {M}")
