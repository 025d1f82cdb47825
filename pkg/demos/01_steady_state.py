"""Steady-state error of the two transmission schemes as sensors are added.

Both schemes use unit amplification and a receiver noise of 1/8.  The orthogonal
scheme wins for small networks, the multi-access scheme for large ones, and they
tie at ten sensors.
"""

import numpy as np

from snkf.core import SystemModel, validate_scenario
from snkf.kalman import compare_schemes, crossover_sensors, run_filter

model = SystemModel(a=0.9, sigma_w2=1.0)

print(" M   S_mac     S_orth    P_mac    P_orth   winner")
for M in (2, 5, 10, 15, 40):
    sc = validate_scenario(model, crossover_sensors(M), np.ones(M), 0.125)
    cmp = compare_schemes(sc, np.ones(M))
    print(f"{M:>2}  {cmp.S:8.4f}  {cmp.S_o:8.4f}  {cmp.P_mac:.5f}  {cmp.P_orth:.5f}  {cmp.dominance}")

# a filter run settles on the closed-form steady state
sc = validate_scenario(model, crossover_sensors(5), np.ones(5), 0.125)
trace = run_filter(sc, np.ones(5), 300, scheme="mac", rng=np.random.default_rng(0))
print(f"\nfilter P after 300 steps {trace.P[-1]:.10f}, closed form {compare_schemes(sc, np.ones(5)).P_mac:.10f}")
