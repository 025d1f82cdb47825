"""Transmit-power allocation in the generalized ``(x, y, kappa, rho, tau)`` form.

Four problems share one parameterisation:

* ``min_sum_power_mac``   minimise ``sum(alpha^2 kappa)`` s.t. ``(sum(alpha^2 tau) + sigma_n2) x <= s^2 y``,
  ``s = sum(alpha rho)``
* ``min_covariance_mac``  minimise ``(sum(alpha^2 tau) + sigma_n2) / s^2`` s.t. ``sum(alpha^2 kappa) <= gamma_total``
* ``min_sum_power_orth``  minimise ``sum(alpha^2 kappa)`` s.t. ``sum(alpha^2 rho^2 / (alpha^2 tau + sigma_n2)) >= x / y``
* ``min_covariance_orth`` maximise that orthogonal SNR s.t. ``sum(alpha^2 kappa) <= gamma_total``

For a static channel and covariance target ``D`` the mapping is
``x = a^2 D + sigma_w2 - D``, ``y = D (D - sigma_w2)``, ``rho = h c``,
``tau = h^2 sigma_v2`` and ``kappa = c^2 E[x^2] + sigma_v2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .core import SensorSet, SystemModel, as_float, as_gains, sensor_power_coefficients

log = logging.getLogger(__name__)

OBJECTIVES = ("min_sum_power_mac", "min_covariance_mac", "min_sum_power_orth", "min_covariance_orth")
_BUDGET_OBJECTIVES = ("min_covariance_mac", "min_covariance_orth")


class AllocationError(ValueError):
    pass


class InfeasibleError(AllocationError):
    """The covariance target cannot be met with finite power."""

    def __init__(self, margin: float, message: str | None = None):
        self.margin = margin
        super().__init__(message or f"infeasible problem (margin {margin:.6g} <= 0)")


class DomainError(AllocationError):
    pass


@dataclass(frozen=True)
class AllocationProblem:
    kappa: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    sigma_n2: float
    objective: str
    x: Optional[float] = None
    y: Optional[float] = None
    gamma_total: Optional[float] = None

    def __post_init__(self):
        for name in ("kappa", "rho", "tau"):
            arr = np.array(getattr(self, name), dtype=float, ndmin=1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if not (len(self.kappa) == len(self.rho) == len(self.tau) >= 1):
            raise ValueError("kappa, rho and tau must have the same length M >= 1")
        if np.any(self.kappa <= 0) or np.any(self.tau <= 0) or not self.sigma_n2 > 0:
            raise ValueError("kappa, tau and sigma_n2 must be strictly positive")
        if not (np.all(np.isfinite(self.kappa)) and np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.tau))):
            raise ValueError("non-finite problem data")
        if self.objective in _BUDGET_OBJECTIVES:
            if self.gamma_total is None or not self.gamma_total > 0:
                raise ValueError("budget problems need gamma_total > 0")
        elif self.x is None or self.y is None or not (self.x > 0 and self.y > 0):
            raise ValueError("covariance-constrained problems need x > 0 and y > 0")

    @property
    def M(self) -> int:
        return len(self.kappa)

    @property
    def scheme(self) -> str:
        return "mac" if self.objective.endswith("mac") else "orth"

    @property
    def target(self) -> float:
        """Required SNR ``x / y``."""
        return self.x / self.y

    def with_objective(self, objective: str, **kw) -> "AllocationProblem":
        args = dict(kappa=self.kappa, rho=self.rho, tau=self.tau, sigma_n2=self.sigma_n2,
                    x=self.x, y=self.y, gamma_total=self.gamma_total)
        args.update(kw)
        return AllocationProblem(objective=objective, **args)


@dataclass
class AllocationSolution:
    alphas: np.ndarray
    powers: np.ndarray
    total_power: float
    constraint_value: float
    objective: str
    lam: Optional[float] = None
    mu: Optional[float] = None
    active_count: Optional[int] = None
    order: Optional[np.ndarray] = None
    conditions: Optional[tuple] = None
    snr: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def alphas_sq(self) -> np.ndarray:
        return self.alphas**2

    def to_dict(self) -> dict:
        doc = {
            "objective": self.objective,
            "alphas_sq": [float(v) for v in self.alphas_sq],
            "alphas": [float(v) for v in self.alphas],
            "powers": [float(v) for v in self.powers],
            "total_power": float(self.total_power),
            "lambda": None if self.lam is None else float(self.lam),
            "constraint_value": float(self.constraint_value),
        }
        if self.mu is not None:
            doc["mu"] = float(self.mu)
        if self.active_count is not None:
            doc["M1"] = int(self.active_count)
        return doc


class Feasibility(NamedTuple):
    feasible: bool
    margin: float


class AllocationEvaluation(NamedTuple):
    objective: float
    constraint_value: float
    powers: np.ndarray
    snr: float


# -- mapping from the physical model ------------------------------------------


def covariance_targets(model: SystemModel, D: float, P_prev: float | None = None) -> tuple[float, float]:
    """``(x, y)`` for the constraint ``P_next <= D`` given the current prior ``P_prev``.

    ``P_prev = D`` (the default) gives the steady-state problem.
    """
    model.require_stable()
    lo, hi = model.sigma_w2, model.sigma_w2 / (1 - model.a**2)
    if not lo < D < hi:
        raise DomainError(f"covariance target D = {D:g} must lie in the open interval ({lo:g}, {hi:g})")
    P = D if P_prev is None else float(P_prev)
    return model.a**2 * P + model.sigma_w2 - D, P * (D - model.sigma_w2)


def build_problem(
    model: SystemModel,
    sensors: SensorSet,
    channels,
    noise,
    *,
    D: float | None = None,
    gamma_total: float | None = None,
    scheme: str = "mac",
    P_prev: float | None = None,
) -> AllocationProblem:
    """Build the generalized problem for a covariance target ``D`` or a budget ``gamma_total``."""
    if (D is None) == (gamma_total is None):
        raise ValueError("give exactly one of D or gamma_total")
    if scheme not in ("mac", "orth"):
        raise ValueError(f"unknown scheme {scheme!r}")
    h = as_gains(channels)
    if h is None:
        h = np.ones(sensors.M)
    if np.any(h <= 0):
        raise DomainError("channel magnitudes must be positive")
    kappa = sensor_power_coefficients(sensors, model)
    rho, tau = h * sensors.c, h**2 * sensors.sigma_v2
    sn2 = as_float(noise)
    if D is not None:
        x, y = covariance_targets(model, D, P_prev)
        obj = "min_sum_power_mac" if scheme == "mac" else "min_sum_power_orth"
        return AllocationProblem(kappa, rho, tau, sn2, obj, x=x, y=y)
    obj = "min_covariance_mac" if scheme == "mac" else "min_covariance_orth"
    return AllocationProblem(kappa, rho, tau, sn2, obj, gamma_total=float(gamma_total))


def build_static_problem(model, sensors, channels, noise, *, D=None, gamma_total=None, scheme="mac"):
    return build_problem(model, sensors, channels, noise, D=D, gamma_total=gamma_total, scheme=scheme)


# -- evaluation ----------------------------------------------------------------


def mac_snr_of(problem: AllocationProblem, alphas) -> float:
    alphas = np.asarray(alphas, dtype=float)
    s = float(np.dot(alphas, problem.rho))
    return s * s / (float(np.dot(alphas**2, problem.tau)) + problem.sigma_n2)


def orth_snr_of(problem: AllocationProblem, alphas) -> float:
    a2 = np.asarray(alphas, dtype=float) ** 2
    return float(np.sum(a2 * problem.rho**2 / (a2 * problem.tau + problem.sigma_n2)))


def evaluate_allocation(problem: AllocationProblem, alphas) -> AllocationEvaluation:
    """Objective and constraint value of ``alphas``; no optimisation.

    For the power-minimising problems the constraint value is the achieved
    SNR (to be compared with ``x / y``); for the budget problems it is the
    total power.  The multi-access covariance objective is ``r_bar / s^2``
    (``inf`` when ``s = 0``) and the orthogonal one is ``-S^o``.
    """
    alphas = np.asarray(alphas, dtype=float)
    powers = alphas**2 * problem.kappa
    total = float(np.sum(powers))
    snr = mac_snr_of(problem, alphas) if problem.scheme == "mac" else orth_snr_of(problem, alphas)
    if problem.objective in ("min_sum_power_mac", "min_sum_power_orth"):
        return AllocationEvaluation(total, snr, powers, snr)
    if problem.objective == "min_covariance_mac":
        s = float(np.dot(alphas, problem.rho))
        r = float(np.dot(alphas**2, problem.tau)) + problem.sigma_n2
        return AllocationEvaluation(r / (s * s) if s != 0 else np.inf, total, powers, snr)
    return AllocationEvaluation(-snr, total, powers, snr)


def _solution(problem, alphas, **kw) -> AllocationSolution:
    ev = evaluate_allocation(problem, alphas)
    return AllocationSolution(
        alphas=np.asarray(alphas, dtype=float), powers=ev.powers, total_power=float(np.sum(ev.powers)),
        constraint_value=ev.constraint_value, objective=problem.objective, snr=ev.snr, **kw,
    )


# -- feasibility and the multi-access problems -----------------------------------


def feasibility(problem: AllocationProblem) -> Feasibility:
    """``sum(rho^2 / tau) > x / y``, strictly; shared by both power-minimising problems."""
    margin = float(np.sum(problem.rho**2 / problem.tau)) - problem.target
    return Feasibility(margin > 0, margin)


def lambda_equation(problem: AllocationProblem, lam: float) -> float:
    """``sum(lam rho^2 / (kappa + lam tau x)) - 1/y``; increasing in ``lam``."""
    p = problem
    return float(np.sum(lam * p.rho**2 / (p.kappa + lam * p.tau * p.x))) - 1.0 / p.y


def _solve_lambda(problem: AllocationProblem) -> float:
    f = lambda lam: lambda_equation(problem, lam)
    lo, hi = 1e-12, 1.0
    while f(hi) <= 0:
        hi *= 10.0
        if hi > 1e300:
            raise InfeasibleError(feasibility(problem).margin, "no bracket for lambda")
    while f(lo) > 0:
        lo /= 10.0
        if lo < 1e-300:
            break
    return brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000)


def solve_p1(problem: AllocationProblem) -> AllocationSolution:
    """Minimum sum power in the multi-access scheme.

    ``lambda`` solves the increasing lambda equation; the amplifications are
    ``alpha_i = mu rho_i / (2 (kappa_i + lambda tau_i x))`` with ``mu > 0``
    fixed by making the covariance constraint active.  ``-alpha`` is
    equally optimal.
    """
    p = problem
    if p.objective != "min_sum_power_mac":
        p = p.with_objective("min_sum_power_mac")
    feas = feasibility(p)
    if not feas.feasible:
        raise InfeasibleError(feas.margin)
    lam = _solve_lambda(p)
    beta = p.rho / (p.kappa + lam * p.tau * p.x)
    active_den = float(np.dot(beta, p.rho)) ** 2 * p.y - p.x * float(np.dot(beta**2, p.tau))
    closed_den = float(np.sum(beta**2 * p.kappa)) / lam
    if not active_den > 0:
        active_den = closed_den
    t2 = p.sigma_n2 * p.x / active_den
    mu = 2.0 * np.sqrt(t2)
    mu_closed = 2.0 * np.sqrt(p.sigma_n2 * p.x / closed_den)
    if abs(mu - mu_closed) > 1e-6 * mu:
        log.warning("mu from constraint activeness (%g) differs from closed form (%g)", mu, mu_closed)
    alphas = np.sqrt(t2) * beta
    return _solution(p, alphas, lam=lam, mu=mu, extra={"mu_closed_form": mu_closed})


def solve_p2(problem: AllocationProblem) -> AllocationSolution:
    """Maximum multi-access SNR under a sum-power budget.

    ``alpha_i^2 = gamma u_i / sum_j(u_j kappa_j)`` with
    ``u_i = rho_i^2 / (kappa_i + gamma tau_i / sigma_n2)^2``; the sign of
    ``alpha_i`` follows ``rho_i``.
    """
    p = problem
    g = p.gamma_total
    u = p.rho**2 / (p.kappa + g * p.tau / p.sigma_n2) ** 2
    norm = float(np.sum(u * p.kappa))
    if norm <= 0:
        raise AllocationError("every rho_i is zero; no allocation yields signal")
    alphas = np.sign(p.rho) * np.sqrt(g * u / norm)
    return _solution(p, alphas, extra={"broadcast": 1.0 / norm})


# -- orthogonal problems: water-filling -----------------------------------------


def quality_order(problem: AllocationProblem) -> np.ndarray:
    """Sensors with ``rho != 0`` sorted by decreasing ``rho^2 / kappa`` (stable on ties)."""
    ratio = problem.rho**2 / problem.kappa
    idx = np.flatnonzero(problem.rho != 0)
    return idx[np.argsort(-ratio[idx], kind="stable")]


def _waterfill(problem: AllocationProblem, power_objective: bool) -> AllocationSolution:
    p = problem
    sn2 = p.sigma_n2
    order = quality_order(p)
    if len(order) == 0:
        raise AllocationError("every rho_i is zero")
    rho, kap, tau = p.rho[order], p.kappa[order], p.tau[order]
    q = np.abs(rho) * np.sqrt(sn2 / kap)
    W = np.cumsum(rho**2 / tau)
    V = np.cumsum(np.abs(rho) * np.sqrt(kap * sn2) / tau)
    if power_objective:
        den = W - p.target
        with np.errstate(divide="ignore", invalid="ignore"):
            level = np.where(den > 0, V / den, np.inf)
    else:
        level = (p.gamma_total + np.cumsum(kap / tau * sn2)) / V
    n = len(order)
    ok_den = (W - p.target > 0) if power_objective else np.ones(n, bool)
    active_last = ok_den & (level * q - sn2 > 0)
    nxt = np.append(ok_den[1:] & (level[1:] * q[1:] - sn2 <= 0), True)
    candidates = np.flatnonzero(ok_den & active_last & nxt)
    if len(candidates) == 1:
        m = int(candidates[0])
    else:
        valid = np.flatnonzero(ok_den & active_last)
        if len(valid) == 0:
            raise InfeasibleError(feasibility(p).margin if power_objective else 0.0)
        m = int(valid[-1])
        log.debug("active-set conditions matched %d candidates; using M1 = %d", len(candidates), m + 1)
    lev = level[m]
    a2 = np.zeros(p.M)
    a2[order] = np.maximum(lev * q - sn2, 0.0) / tau
    a2[order[m + 1:]] = 0.0
    lam = lev**2 if power_objective else 1.0 / lev**2
    conditions = (bool(ok_den[m] or not power_objective), bool(active_last[m]), bool(nxt[m]))
    return _solution(p, np.sqrt(a2), lam=float(lam), active_count=m + 1, order=order, conditions=conditions)


def solve_p3(problem: AllocationProblem) -> AllocationSolution:
    """Minimum sum power in the orthogonal scheme (water-filling, all ``alpha_i >= 0``)."""
    p = problem if problem.objective == "min_sum_power_orth" else problem.with_objective("min_sum_power_orth")
    feas = feasibility(p)
    if not feas.feasible:
        raise InfeasibleError(feas.margin)
    return _waterfill(p, True)


def solve_p4(problem: AllocationProblem) -> AllocationSolution:
    """Maximum orthogonal SNR under a sum-power budget (water-filling, all ``alpha_i >= 0``)."""
    p = problem if problem.objective == "min_covariance_orth" else problem.with_objective("min_covariance_orth")
    return _waterfill(p, False)


SOLVERS = {
    "min_sum_power_mac": solve_p1,
    "min_covariance_mac": solve_p2,
    "min_sum_power_orth": solve_p3,
    "min_covariance_orth": solve_p4,
}


def solve(problem: AllocationProblem) -> AllocationSolution:
    return SOLVERS[problem.objective](problem)


# -- equal-power baseline -------------------------------------------------------


def equal_power_solution(problem: AllocationProblem) -> AllocationSolution:
    """Every sensor spends the same power; signs follow ``rho``.

    Budget problems split ``gamma_total`` evenly.  Power-minimising problems
    use the smallest common power meeting the SNR target, raising
    :class:`InfeasibleError` when no common power does.
    """
    p = problem
    shape = np.sign(p.rho) / np.sqrt(p.kappa)
    shape = np.where(p.rho == 0, 1.0 / np.sqrt(p.kappa), shape)
    if p.objective in _BUDGET_OBJECTIVES:
        return _solution(p, np.sqrt(p.gamma_total / p.M) * shape)
    target = p.target
    if p.scheme == "mac":
        num = float(np.sum(np.abs(p.rho) / np.sqrt(p.kappa))) ** 2
        den = num - target * float(np.sum(p.tau / p.kappa))
        if den <= 0:
            raise InfeasibleError(den, "equal power cannot reach the SNR target")
        t = target * p.sigma_n2 / den
    else:
        sup = float(np.sum(p.rho**2 / p.tau))
        if sup <= target:
            raise InfeasibleError(sup - target)
        f = lambda t: float(np.sum(t * p.rho**2 / p.kappa / (t * p.tau / p.kappa + p.sigma_n2))) - target
        hi = 1.0
        while f(hi) <= 0:
            hi *= 10.0
        t = brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return _solution(p, np.sqrt(t) * shape)
