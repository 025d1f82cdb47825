"""How fast the error approaches the process-noise floor in a large symmetric network."""

import numpy as np

from snkf.asymptotics import SymmetricParams, asympt_mac_scaled, exact_symmetric
from snkf.core import SystemModel

p = SymmetricParams(c=1.0, sigma_v2=1.0, h=0.8, model=SystemModel(0.8, 1.5), sigma_n2=1.0)
lead = p.model.a**2 * (p.sigma_v2 + p.sigma_n2 / p.h**2) / p.c**2

print("     M   exact P      M*(P - sigma_w2)   leading constant")
for M in (10, 30, 100, 1000, 10000):
    P = exact_symmetric(M, p, "mac", "inv_sqrt_M")
    print(f"{M:>6}  {P:.8f}  {M * (P - 1.5):15.6f}   {lead:.4f}")
print(f"\nasymptotic formula at M=100: {float(asympt_mac_scaled(100, p)):.8f}")
