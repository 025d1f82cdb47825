"""Two-dimensional state observed by scalar sensors over a multi-access channel."""

import numpy as np

from snkf.vecext import VectorSystem, lyapunov_state_covariance, vector_riccati_step_mac

A = np.array([[0.95, 0.1], [0.0, 0.8]])
Q = np.diag([0.1, 0.2])
C = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.array([[1.0, 1.0]])]
R = [np.array([[0.2]])] * 3
system = VectorSystem(A, Q, C, R, np.array([[0.05]]))
H = [np.array([[1.0]]), np.array([[0.7]]), np.array([[0.5]])]
alphas = [np.array([[1.0]])] * 3

P = lyapunov_state_covariance(A, Q)
print("stationary covariance\n", np.round(P, 4))
for _ in range(200):
    P = vector_riccati_step_mac(P, system, H, alphas)
print("steady-state prediction covariance\n", np.round(P, 4))
print("trace", round(float(np.trace(P)), 6))
