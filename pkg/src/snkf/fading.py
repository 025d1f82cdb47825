"""Fading channels with full CSI: channel sampling and greedy per-step allocation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .alloc import (
    AllocationProblem,
    AllocationSolution,
    InfeasibleError,
    solve_p1,
    solve_p2,
    solve_p3,
    solve_p4,
)
from .core import Scenario, SensorSet, SystemModel, as_float, as_gains, sensor_power_coefficients
from .kalman import FilterTrace, riccati_step, run_filter


@dataclass(frozen=True)
class FadingModel:
    """Rician channels: real and imaginary parts are ``d^-exponent * N(mean, variance)``."""

    distances: np.ndarray
    mean_re: np.ndarray
    mean_im: Optional[np.ndarray] = None
    variance: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        d = np.array(self.distances, dtype=float, ndmin=1)
        mr = np.broadcast_to(np.asarray(self.mean_re, dtype=float), d.shape).copy()
        mi = mr.copy() if self.mean_im is None else np.broadcast_to(np.asarray(self.mean_im, dtype=float), d.shape).copy()
        for arr in (d, mr, mi):
            arr.setflags(write=False)
        if np.any(d <= 0):
            raise ValueError("distances must be positive")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "mean_re", mr)
        object.__setattr__(self, "mean_im", mi)

    @property
    def M(self) -> int:
        return len(self.distances)

    @property
    def scale(self) -> np.ndarray:
        return self.distances ** (-self.exponent)

    @property
    def mean(self) -> np.ndarray:
        return self.scale * (self.mean_re + 1j * self.mean_im)

    @property
    def component_variance(self) -> np.ndarray:
        return self.scale**2 * self.variance


@dataclass(frozen=True)
class ChannelSamples:
    """Complex gains of shape ``(steps, M)``; row ``k`` is the realization at time ``k``."""

    gains: np.ndarray

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.gains)

    def __len__(self) -> int:
        return self.gains.shape[0]

    def __getitem__(self, k):
        from .core import ChannelRealization

        return ChannelRealization(self.gains[k], "complex")


def sensor_streams(seed, M: int) -> list[np.random.Generator]:
    """One independent generator per sensor, derived deterministically from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(M)]


def sample_channels(fading: FadingModel, steps: int, seed) -> ChannelSamples:
    """I.i.d. over time, independent across sensors; identical for identical seeds."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    sd = np.sqrt(fading.variance)
    cols = []
    for i, rng in enumerate(sensor_streams(seed, fading.M)):
        z = rng.standard_normal((steps, 2)) * sd
        cols.append((fading.mean_re[i] + z[:, 0]) + 1j * (fading.mean_im[i] + z[:, 1]))
    return ChannelSamples(fading.scale * np.stack(cols, axis=1))


# -- greedy per-step allocation ---------------------------------------------------


class InfeasibleStepError(InfeasibleError):
    """The current channel cannot deliver the SNR needed to reach ``D``."""

    def __init__(self, required: float, available: float):
        self.required, self.available = required, available
        super().__init__(available - required, f"step needs SNR > {required:.6g}, channel supports < {available:.6g}")


@dataclass
class GreedyStep:
    solution: AllocationSolution
    P_next: float
    feasible: bool = True


def _problem_data(model: SystemModel, sensors: SensorSet, channel, noise):
    h = as_gains(channel)
    kappa = sensor_power_coefficients(sensors, model)
    return kappa, h * sensors.c, h**2 * sensors.sigma_v2, as_float(noise)


def _zero_solution(objective: str, M: int) -> AllocationSolution:
    z = np.zeros(M)
    return AllocationSolution(z, z.copy(), 0.0, 0.0, objective, snr=0.0)


def greedy_min_power_step(P_k, model, sensors, channel_k, noise, D, scheme: str = "mac") -> GreedyStep:
    """Least total power making ``P_{k+1} = D``, given the prior ``P_k``.

    Uses ``x = a^2 P_k + sigma_w2 - D`` and ``y = P_k (D - sigma_w2)``.  When
    ``x <= 0`` the target is met without transmitting and the zero
    allocation is returned.
    """
    if not D > model.sigma_w2:
        raise ValueError(f"D must exceed sigma_w2 = {model.sigma_w2:g}")
    if not P_k > 0:
        raise ValueError("P_k must be positive")
    kappa, rho, tau, sn2 = _problem_data(model, sensors, channel_k, noise)
    x = model.a**2 * P_k + model.sigma_w2 - D
    y = P_k * (D - model.sigma_w2)
    objective = "min_sum_power_mac" if scheme == "mac" else "min_sum_power_orth"
    if x <= 0:
        return GreedyStep(_zero_solution(objective, sensors.M), riccati_step(P_k, 0.0, model))
    problem = AllocationProblem(kappa, rho, tau, sn2, objective, x=x, y=y)
    available = float(np.sum(rho**2 / tau))
    if available <= x / y:
        raise InfeasibleStepError(x / y, available)
    sol = solve_p1(problem) if scheme == "mac" else solve_p3(problem)
    return GreedyStep(sol, riccati_step(P_k, sol.snr, model))


def greedy_min_cov_step(P_k, model, sensors, channel_k, noise, gamma_total, scheme: str = "mac") -> GreedyStep:
    """Smallest ``P_{k+1}`` under the sum-power budget; maximises the step SNR."""
    kappa, rho, tau, sn2 = _problem_data(model, sensors, channel_k, noise)
    objective = "min_covariance_mac" if scheme == "mac" else "min_covariance_orth"
    problem = AllocationProblem(kappa, rho, tau, sn2, objective, gamma_total=gamma_total)
    sol = solve_p2(problem) if scheme == "mac" else solve_p4(problem)
    return GreedyStep(sol, riccati_step(P_k, sol.snr, model))


@dataclass(frozen=True)
class GreedyRunConfig:
    steps: int
    D: Optional[float] = None
    gamma_total: Optional[float] = None
    scheme: str = "mac"
    seed: int = 0
    P0: Optional[float] = None
    policy: str = "best-effort"
    gamma_cap: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if (self.D is None) == (self.gamma_total is None):
            raise ValueError("give exactly one of D or gamma_total")
        if self.policy not in ("best-effort", "strict"):
            raise ValueError("policy must be 'best-effort' or 'strict'")


@dataclass
class GreedyRun:
    trace: FilterTrace
    alphas: np.ndarray
    infeasible_steps: int
    channels: ChannelSamples = field(repr=False, default=None)


def greedy_allocations(model, sensors, noise, magnitudes, config: GreedyRunConfig, P0: float):
    """Sequential per-step solve; returns ``(alphas, P, feasible)`` arrays."""
    steps, M = magnitudes.shape
    alphas = np.zeros((steps, M))
    Ps = np.empty(steps + 1)
    feasible = np.ones(steps, dtype=bool)
    P = P0
    for k in range(steps):
        Ps[k] = P
        if config.D is not None:
            try:
                st = greedy_min_power_step(P, model, sensors, magnitudes[k], noise, config.D, config.scheme)
            except InfeasibleStepError:
                if config.policy == "strict":
                    raise
                st = greedy_min_cov_step(P, model, sensors, magnitudes[k], noise, config.gamma_cap, config.scheme)
                st.feasible = False
        else:
            st = greedy_min_cov_step(P, model, sensors, magnitudes[k], noise, config.gamma_total, config.scheme)
        alphas[k] = st.solution.alphas
        feasible[k] = st.feasible
        P = st.P_next
    Ps[steps] = P
    return alphas, Ps, feasible


def simulate_greedy(scenario: Scenario, fading: FadingModel, config: GreedyRunConfig) -> GreedyRun:
    """Sample channels, allocate greedily each step and run the Kalman filter.

    ``P_1`` defaults to the stationary prior.  Channels, state and noise use
    separate streams derived from ``config.seed``.
    """
    if fading.M != scenario.M:
        raise ValueError("fading model and scenario disagree on M")
    model = scenario.model
    P0 = model.state_variance if config.P0 is None else float(config.P0)
    ch_seed, sim_seed = np.random.SeedSequence(config.seed).spawn(2)
    channels = sample_channels(fading, config.steps, ch_seed)
    H = channels.magnitudes
    alphas, _, feasible = greedy_allocations(model, scenario.sensors, scenario.noise, H, config, P0)
    trace = run_filter(
        scenario, alphas, config.steps, scheme=config.scheme, rng=np.random.default_rng(sim_seed),
        channels=H, P0=P0,
    )
    trace.extra["feasible"] = feasible
    trace.extra["total_power"] = trace.powers.sum(axis=1)
    return GreedyRun(trace, alphas, int(np.sum(~feasible)), channels)
