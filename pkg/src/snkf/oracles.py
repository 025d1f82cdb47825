"""Brute-force reference solutions for the allocation problems.

These share no code with the closed-form solvers in :mod:`snkf.alloc`:

* orthogonal problems enumerate every candidate active set and apply the
  per-set stationarity solution, keeping primal-feasible candidates only;
* multi-access problems are rewritten on the unit sphere through
  ``alpha = t K^{-1/2} u`` and maximised by seeded multi-start projected
  gradient ascent, with an eigen-decomposition as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import eigh

from .alloc import AllocationProblem, evaluate_allocation


class OracleDisagreement(RuntimeError):
    """Independent starts failed to agree on the optimum."""


@dataclass(frozen=True)
class OracleResult:
    objective: float
    alphas: np.ndarray
    agreeing_starts: int = 0
    active_set: tuple = ()


# -- orthogonal: active-set enumeration ------------------------------------------


def _subset_allocation(p: AllocationProblem, idx: np.ndarray, power_objective: bool):
    sn2 = p.sigma_n2
    rho, kap, tau = np.abs(p.rho[idx]), p.kappa[idx], p.tau[idx]
    q = rho * np.sqrt(sn2 / kap)
    V = float(np.sum(rho * np.sqrt(kap * sn2) / tau))
    if power_objective:
        den = float(np.sum(rho**2 / tau)) - p.target
        if den <= 0:
            return None
        level = V / den
    else:
        level = (p.gamma_total + float(np.sum(kap * sn2 / tau))) / V
    a2 = (level * q - sn2) / tau
    if np.any(a2 <= 0):
        return None
    out = np.zeros(p.M)
    out[idx] = np.sqrt(a2)
    return out


def enumerate_active_sets(problem: AllocationProblem) -> OracleResult:
    """Best primal-feasible candidate over all non-empty subsets of useful sensors."""
    power_objective = problem.objective == "min_sum_power_orth"
    if not power_objective and problem.objective != "min_covariance_orth":
        raise ValueError("active-set enumeration applies to the orthogonal problems only")
    useful = np.flatnonzero(problem.rho != 0)
    best = None
    for size in range(1, len(useful) + 1):
        for subset in combinations(useful, size):
            alphas = _subset_allocation(problem, np.array(subset), power_objective)
            if alphas is None:
                continue
            obj = evaluate_allocation(problem, alphas).objective
            if best is None or obj < best.objective:
                best = OracleResult(obj, alphas, active_set=tuple(int(i) for i in subset))
    if best is None:
        raise OracleDisagreement("no primal-feasible active set")
    return best


def orth_numeric_optimum(problem: AllocationProblem, starts: int = 16, seed: int = 0) -> OracleResult:
    """Generic constrained optimiser over ``p = alpha^2 >= 0`` as a second orthogonal check."""
    from scipy.optimize import minimize

    p = problem
    rng = np.random.default_rng(seed)
    snr = lambda v: float(np.sum(v * p.rho**2 / (v * p.tau + p.sigma_n2)))
    power = lambda v: float(np.dot(v, p.kappa))
    if p.objective == "min_sum_power_orth":
        scale = p.target * p.sigma_n2 / np.min(p.rho[p.rho != 0] ** 2) if np.any(p.rho) else 1.0
        fun, cons = (lambda v: power(v) / scale), [{"type": "ineq", "fun": lambda v: snr(v) / p.target - 1.0}]
    else:
        ref = float(np.sum(p.rho**2 / p.tau))
        fun = lambda v: -snr(v) / ref
        cons = [{"type": "ineq", "fun": lambda v: 1.0 - power(v) / p.gamma_total}]
        scale = p.gamma_total / float(np.min(p.kappa))
    best = None
    for _ in range(starts):
        v0 = rng.uniform(0, 2, p.M) * scale
        res = minimize(fun, v0, method="SLSQP", bounds=[(0, None)] * p.M, constraints=cons,
                       options={"ftol": 1e-14, "maxiter": 2000})
        v = np.maximum(res.x, 0.0)
        if cons[0]["fun"](v) < -1e-7:
            continue
        obj = evaluate_allocation(p, np.sqrt(v)).objective
        if best is None or obj < best.objective:
            best = OracleResult(obj, np.sqrt(v))
    if best is None:
        raise OracleDisagreement("numeric optimiser found no feasible point")
    return best


# -- multi-access: sphere reformulation --------------------------------------------


def _sphere_ascent(f, grad, U, iters=4000, step=0.5):
    vals = f(U)
    eta = np.full(len(U), step)
    for it in range(iters):
        G = grad(U)
        G -= np.sum(G * U, axis=1, keepdims=True) * U
        V = U + eta[:, None] * G
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        nv = f(V)
        better = nv >= vals
        gain = np.max(np.where(better, nv - vals, 0.0))
        U = np.where(better[:, None], V, U)
        vals = np.where(better, nv, vals)
        eta = np.clip(np.where(better, eta * 1.5, eta * 0.5), 0.0, 1e8)
        if it > 50 and gain <= 1e-15 * np.max(np.abs(vals)):
            break
    return U, vals


def _agreement(vals, tol):
    best = float(np.max(vals))
    agree = int(np.sum(np.abs(vals - best) <= tol * max(abs(best), 1e-300)))
    if agree < 2:
        raise OracleDisagreement(f"only {agree} start(s) reached the best value")
    return best, agree


def _starts(M, starts, seed):
    U = np.random.default_rng(seed).standard_normal((starts, M))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def mac_min_power_oracle(problem: AllocationProblem, starts: int = 64, seed: int = 0, tol: float = 1e-6) -> OracleResult:
    """Minimum sum power for the multi-access SNR constraint.

    With ``alpha = t K^{-1/2} u`` the active constraint gives
    ``t^2 = x sigma_n2 / u^T G u`` where ``G = y r r^T - x T`` (``r = rho /
    sqrt(kappa)``, ``T = diag(tau / kappa)``), so the optimum maximises the
    Rayleigh quotient of ``G``.
    """
    p = problem
    r = p.rho / np.sqrt(p.kappa)
    G = p.y * np.outer(r, r) - p.x * np.diag(p.tau / p.kappa)
    f = lambda U: np.einsum("si,ij,sj->s", U, G, U)
    grad = lambda U: 2.0 * U @ G
    U, vals = _sphere_ascent(f, grad, _starts(p.M, starts, seed))
    best, agree = _agreement(vals, tol)
    if best <= 0:
        raise OracleDisagreement("no direction meets the constraint")
    u = U[int(np.argmax(vals))]
    alphas = np.sqrt(p.x * p.sigma_n2 / best) * u / np.sqrt(p.kappa)
    if np.dot(alphas, p.rho) < 0:
        alphas = -alphas
    return OracleResult(p.x * p.sigma_n2 / best, alphas, agree)


def mac_min_power_eig(problem: AllocationProblem) -> float:
    p = problem
    r = p.rho / np.sqrt(p.kappa)
    G = p.y * np.outer(r, r) - p.x * np.diag(p.tau / p.kappa)
    lam_max = float(eigh(G, eigvals_only=True)[-1])
    return p.x * p.sigma_n2 / lam_max if lam_max > 0 else np.inf


def mac_max_snr_oracle(problem: AllocationProblem, starts: int = 64, seed: int = 0, tol: float = 1e-6) -> OracleResult:
    """Maximum multi-access SNR under the sum-power budget.

    The budget is tight at the optimum, so ``alpha = sqrt(gamma) K^{-1/2} u``
    and the SNR becomes ``(r^T u)^2 / u^T B u`` with
    ``B = diag(tau / kappa + sigma_n2 / gamma)``.
    """
    p = problem
    r = p.rho / np.sqrt(p.kappa)
    b = p.tau / p.kappa + p.sigma_n2 / p.gamma_total
    f = lambda U: (U @ r) ** 2 / np.sum(U**2 * b, axis=1)

    def grad(U):
        s, d = U @ r, np.sum(U**2 * b, axis=1)
        return 2 * (s / d)[:, None] * r - 2 * (s**2 / d**2)[:, None] * (U * b)

    U, vals = _sphere_ascent(f, grad, _starts(p.M, starts, seed))
    best, agree = _agreement(vals, tol)
    u = U[int(np.argmax(vals))]
    alphas = np.sqrt(p.gamma_total) * u / np.sqrt(p.kappa)
    if np.dot(alphas, p.rho) < 0:
        alphas = -alphas
    return OracleResult(best, alphas, agree)


def mac_max_snr_closed(problem: AllocationProblem) -> float:
    """``r^T B^{-1} r`` for the diagonal ``B`` above."""
    p = problem
    return float(np.sum(p.rho**2 / (p.tau + p.sigma_n2 * p.kappa / p.gamma_total)))
