"""Error-covariance recursions and steady state for both access schemes.

Both schemes reduce to the same scalar recursion

    P_{k+1} = a^2 P_k / (1 + P_k S_k) + sigma_w2

where ``S_k`` is the effective SNR.  In the multi-access scheme
``S = c_bar^2 / r_bar`` with ``c_bar = sum(alpha h c)`` and
``r_bar = sum(alpha^2 h^2 sigma_v2) + sigma_n2``.  In the orthogonal scheme
``S = sum(alpha^2 h^2 c^2 / (alpha^2 h^2 sigma_v2 + sigma_n2))``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    InstabilityError,
    Scenario,
    SensorSet,
    SystemModel,
    as_alphas,
    as_float,
    as_gains,
    stationary_state_variance,
    transmit_power,
)

SCHEMES = ("mac", "orth")


class DegenerateSnrError(ValueError):
    """The effective noise variance is zero so the SNR is undefined."""


@dataclass(frozen=True)
class SnrDecomposition:
    snr: float
    scheme: str
    c_bar: Optional[float] = None
    r_bar: Optional[float] = None


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def mac_snr(alphas, channels, sensors: SensorSet, noise) -> SnrDecomposition:
    alphas = as_alphas(alphas)
    h = as_gains(channels)
    if h is None:
        h = np.ones_like(alphas)
    ah = alphas * h
    c_bar = float(np.sum(ah * sensors.c))
    r_bar = float(np.sum(ah**2 * sensors.sigma_v2)) + as_float(noise)
    if r_bar <= 0.0:
        raise DegenerateSnrError("effective noise variance r_bar is zero")
    return SnrDecomposition(c_bar**2 / r_bar, "mac", c_bar, r_bar)


def orth_snr_terms(alphas, channels, sensors: SensorSet, noise) -> np.ndarray:
    """Per-sensor SNR contributions; a sensor whose received noise is zero
    and whose signal is zero contributes nothing."""
    alphas = as_alphas(alphas)
    h = as_gains(channels)
    if h is None:
        h = np.ones_like(alphas)
    g2 = (alphas * h) ** 2
    den = g2 * sensors.sigma_v2 + as_float(noise)
    if np.all(den <= 0.0):
        raise DegenerateSnrError("every orthogonal channel has zero effective noise")
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(den > 0.0, g2 * sensors.c**2 / np.where(den > 0, den, 1.0), 0.0)
    return terms


def orth_snr(alphas, channels, sensors: SensorSet, noise) -> SnrDecomposition:
    return SnrDecomposition(float(np.sum(orth_snr_terms(alphas, channels, sensors, noise))), "orth")


def scheme_snr(scheme: str, alphas, channels, sensors: SensorSet, noise) -> SnrDecomposition:
    _check_scheme(scheme)
    fn = mac_snr if scheme == "mac" else orth_snr
    return fn(alphas, channels, sensors, noise)


def riccati_step(P, snr, model: SystemModel):
    """One prior-covariance update driven only by the SNR."""
    return model.a**2 * P / (1.0 + P * snr) + model.sigma_w2


def riccati_step_mac(P, c_bar, r_bar, model: SystemModel):
    if r_bar <= 0:
        raise DegenerateSnrError("r_bar must be positive")
    return model.a**2 * P * r_bar / (c_bar**2 * P + r_bar) + model.sigma_w2


def riccati_step_orth(P, snr_o, model: SystemModel):
    return riccati_step(P, snr_o, model)


def steady_state_from_snr(S, model: SystemModel):
    """Closed-form fixed point of the Riccati recursion for a constant SNR.

    Positive root of ``S P^2 - B P - sigma_w2 = 0`` with
    ``B = a^2 - 1 + sigma_w2 S``.  When ``B < 0`` the root is evaluated as
    ``2 sigma_w2 / (sqrt(B^2 + 4 sigma_w2 S) - B)`` to avoid cancellation.
    """
    model.require_stable()
    S = np.asarray(S, dtype=float)
    if np.any(S < 0):
        raise ValueError("SNR must be non-negative")
    w = model.sigma_w2
    B = model.a**2 - 1.0 + w * S
    root = np.sqrt(B * B + 4.0 * w * S)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = (B + root) / (2.0 * S)
        lower = 2.0 * w / (root - B)
    P = np.where(B < 0, lower, upper)
    P = np.where(S == 0, w / (1.0 - model.a**2), P)
    return float(P) if P.ndim == 0 else P


def steady_state_by_iteration(S, model: SystemModel, P0=None, tol=1e-13, max_iter=1_000_000):
    """Fixed-point iteration of the recursion; kept as an independent check."""
    P = model.sigma_w2 if P0 is None else P0
    for _ in range(max_iter):
        nxt = riccati_step(P, S, model)
        if abs(nxt - P) <= tol * max(nxt, 1.0):
            return nxt
        P = nxt
    raise RuntimeError("fixed-point iteration did not converge")


# -- filter simulation ---------------------------------------------------------


@dataclass
class FilterTrace:
    """Time-indexed predictions ``x_hat_{k|k-1}``, priors ``P_k`` and powers ``gamma_{i,k}``."""

    x_hat: np.ndarray
    P: np.ndarray
    powers: np.ndarray
    scheme: str
    x_true: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.P)

    @property
    def M(self) -> int:
        return self.powers.shape[1]

    def header(self) -> list[str]:
        cols = ["k", "x_hat", "P"] + [f"gamma_{i + 1}" for i in range(self.M)]
        return cols + list(self.extra)

    def rows(self):
        for k in range(len(self)):
            row = [k, repr(float(self.x_hat[k])), repr(float(self.P[k]))]
            row += [repr(float(g)) for g in self.powers[k]]
            for v in self.extra.values():
                val = v[k]
                row.append(str(int(val)) if isinstance(val, (bool, np.bool_)) else repr(float(val)))
            yield row

    def to_csv(self, fh=None, comments: list[str] | None = None) -> str | None:
        """Write the trace as CSV; returns the text when ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        for line in comments or []:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.rows())
        return buf.getvalue() if fh is None else None


def _per_step(arr, steps, M, name):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != M:
            raise ValueError(f"{name} must have {M} entries")
        return np.broadcast_to(arr, (steps, M))
    if arr.shape != (steps, M):
        raise ValueError(f"{name} schedule must have shape {(steps, M)}")
    return arr


def run_filter(
    scenario: Scenario,
    alphas,
    steps: int,
    *,
    scheme: str = "mac",
    rng=None,
    measurements=None,
    channels=None,
    P0: float | None = None,
    x0_hat: float = 0.0,
) -> FilterTrace:
    """Simulate the state and run the time-varying Kalman filter.

    ``alphas`` and ``channels`` are either length-``M`` (static) or
    ``(steps, M)`` schedules.  Without ``measurements`` the state, sensor and
    receiver noise are drawn from ``rng`` (a seed or ``numpy`` Generator);
    the true state is then kept in ``trace.x_true``.  Multi-access
    measurements have shape ``(steps,)``, orthogonal ones ``(steps, M)``.
    """
    _check_scheme(scheme)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    model, sensors = scenario.model, scenario.sensors
    M = sensors.M
    sn2 = scenario.noise.sigma_n2
    A = _per_step(as_alphas(alphas), steps, M, "alphas")
    H = _per_step(scenario.h if channels is None else as_gains(channels), steps, M, "channels")
    P = stationary_state_variance(model) if P0 is None else float(P0)

    simulate = measurements is None
    if simulate:
        rng = np.random.default_rng(rng)
        x_true = np.empty(steps)
        x = rng.normal(0.0, np.sqrt(stationary_state_variance(model)))
    else:
        measurements = np.asarray(measurements, dtype=float)
        x_true = None

    xs = np.empty(steps)
    Ps = np.empty(steps)
    x_hat = float(x0_hat)
    sd_v = np.sqrt(sensors.sigma_v2)
    for k in range(steps):
        xs[k], Ps[k] = x_hat, P
        g = A[k] * H[k]
        if simulate:
            x_true[k] = x
            y = sensors.c * x + sd_v * rng.standard_normal(M)
            if scheme == "mac":
                z = float(np.sum(g * y) + np.sqrt(sn2) * rng.standard_normal())
            else:
                z = g * y + np.sqrt(sn2) * rng.standard_normal(M)
            x = model.a * x + np.sqrt(model.sigma_w2) * rng.standard_normal()
        else:
            z = measurements[k]

        if scheme == "mac":
            snr = mac_snr(A[k], H[k], sensors, sn2)
            innov_var = snr.c_bar**2 * P + snr.r_bar
            x_post = x_hat + P * snr.c_bar / innov_var * (z - snr.c_bar * x_hat)
            P_post = P * snr.r_bar / innov_var
        else:
            C = g * sensors.c
            R = g**2 * sensors.sigma_v2 + sn2
            use = R > 0
            info = float(np.sum(C[use] ** 2 / R[use]))
            P_post = P / (1.0 + P * info)
            x_post = x_hat + P_post * float(np.sum(C[use] / R[use] * (z[use] - C[use] * x_hat)))
        x_hat = model.a * x_post
        P = model.a**2 * P_post + model.sigma_w2

    powers = transmit_power(A, sensors, model)
    return FilterTrace(xs, Ps, np.atleast_2d(powers), scheme, x_true)


# -- scheme comparison ---------------------------------------------------------


@dataclass(frozen=True)
class SchemeComparison:
    S: float
    S_o: float
    P_mac: float
    P_orth: float
    dominance: str
    flipped: tuple[int, ...]


def compare_schemes(scenario: Scenario, alphas, tie_tol: float = 1e-9) -> SchemeComparison:
    """Compare both access schemes for the same amplifications.

    Signs of ``alpha_i`` are flipped where ``alpha_i c_i < 0`` so every
    contribution adds coherently; flipped indices are reported.  The tag
    names the scheme with the larger SNR (and smaller steady state).
    """
    alphas = np.array(as_alphas(alphas), dtype=float)
    flip = np.flatnonzero(alphas * scenario.sensors.c < 0)
    alphas[flip] *= -1.0
    args = (alphas, scenario.h, scenario.sensors, scenario.noise)
    S = mac_snr(*args).snr
    S_o = orth_snr(*args).snr
    if abs(S - S_o) <= tie_tol * max(S, S_o, 1.0):
        tag = "tie"
    else:
        tag = "mac" if S > S_o else "orthogonal"
    model = scenario.model
    return SchemeComparison(
        S, S_o, steady_state_from_snr(S, model), steady_state_from_snr(S_o, model),
        tag, tuple(int(i) for i in flip),
    )


def crossover_sensors(M: int) -> SensorSet:
    """Sensor population whose first two moments of ``c`` are ``1.5 M`` and ``2.5 M``.

    Even ``M``: half the sensors have ``c = 1`` and half ``c = 2``.  Odd
    ``M >= 3``: ``(M-3)/2`` of each plus a moment-matched triple, so both
    SNRs keep the same closed forms as the even case.  Unit noise variances.
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    if M % 2 == 0:
        c = [1.0] * (M // 2) + [2.0] * (M // 2)
    else:
        n = (M - 3) // 2
        t = np.sqrt(0.375)
        c = [1.0] * n + [2.0] * n + [1.5 - t, 1.5, 1.5 + t]
    return SensorSet(c, np.ones(M))


__all__ = [
    "DegenerateSnrError",
    "FilterTrace",
    "InstabilityError",
    "SchemeComparison",
    "SnrDecomposition",
    "compare_schemes",
    "crossover_sensors",
    "mac_snr",
    "orth_snr",
    "orth_snr_terms",
    "riccati_step",
    "riccati_step_mac",
    "riccati_step_orth",
    "run_filter",
    "scheme_snr",
    "steady_state_by_iteration",
    "steady_state_from_snr",
]
