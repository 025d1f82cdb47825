"""Large-M behaviour of the steady-state error covariance.

Leading-order expansions are returned as plain expressions; the exact
steady state is always available through :func:`exact_symmetric` and the
``kalman`` closed form, and the O(1/M^2) remainders are checked by ratio
tests rather than computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import SensorSet, SystemModel, as_float, sensor_power_coefficients
from .kalman import mac_snr, orth_snr, steady_state_from_snr


@dataclass(frozen=True)
class SymmetricParams:
    c: float
    sigma_v2: float
    h: float
    model: SystemModel
    sigma_n2: float

    def __post_init__(self):
        if self.c == 0 or self.h <= 0 or self.sigma_v2 <= 0:
            raise ValueError("symmetric parameters need c != 0, h > 0, sigma_v2 > 0")


@dataclass(frozen=True)
class ParamBounds:
    c_min: float
    c_max: float
    sigma_min2: float
    sigma_max2: float
    h_min: float
    h_max: float

    def __post_init__(self):
        for lo, hi in ((self.c_min, self.c_max), (self.sigma_min2, self.sigma_max2), (self.h_min, self.h_max)):
            if not (0 < lo <= hi < np.inf):
                raise ValueError("bounds must satisfy 0 < min <= max < inf")


def _coef_noscale(p: SymmetricParams) -> float:
    return p.model.a**2 * p.sigma_v2 / p.c**2


def _coef_with_receiver_noise(p: SymmetricParams) -> float:
    return p.model.a**2 * (p.sigma_v2 + p.sigma_n2 / p.h**2) / p.c**2


def asympt_mac_noscale(M, p: SymmetricParams):
    """Multi-access, ``alpha_i = 1``: ``sigma_w2 + a^2 sigma_v2 / (c^2 M)``."""
    return p.model.sigma_w2 + _coef_noscale(p) / np.asarray(M, dtype=float)


def asympt_orth_noscale(M, p: SymmetricParams):
    """Orthogonal, ``alpha_i = 1``: receiver noise adds ``sigma_n2 / h^2`` to the coefficient."""
    return p.model.sigma_w2 + _coef_with_receiver_noise(p) / np.asarray(M, dtype=float)


def asympt_mac_scaled(M, p: SymmetricParams):
    """Multi-access, ``alpha_i = 1/sqrt(M)``; same expression as the orthogonal unscaled case."""
    return asympt_orth_noscale(M, p)


class OrthScaledExpansion(NamedTuple):
    limit: float
    coefficient: float
    value: float


def asympt_orth_scaled_limit(M, p: SymmetricParams) -> OrthScaledExpansion:
    """Orthogonal scheme with ``alpha_i = 1/sqrt(M)``.

    The SNR stays bounded, so the covariance tends to a limit above
    ``sigma_w2``.  Returns the limit, the 1/M coefficient and their
    combination at ``M`` (``M = inf`` gives the limit).
    """
    a2, w = p.model.a**2, p.model.sigma_w2
    sn, hc2, sv = p.sigma_n2, (p.h * p.c) ** 2, p.sigma_v2
    root = np.sqrt((a2 - 1) ** 2 * sn**2 + 2 * (a2 + 1) * sn * hc2 * w + hc2**2 * w**2)
    limit = ((a2 - 1) * sn + hc2 * w + root) / (2 * hc2)
    coef = (a2 - 1) * sv / (2 * p.c**2) + (
        (a2 + 1) * p.h**4 * sv * p.c**2 * w + (a2 - 1) ** 2 * sn * p.h**2 * sv
    ) / (2 * hc2 * root)
    value = limit if np.isinf(M) else limit + coef / M
    return OrthScaledExpansion(float(limit), float(coef), float(value))


def symmetric_snr(M: int, p: SymmetricParams, scheme: str, scaling: str = "none") -> float:
    """Exact SNR of ``M`` identical sensors with ``alpha = 1`` or ``1/sqrt(M)``."""
    alpha = 1.0 if scaling == "none" else 1.0 / np.sqrt(M)
    # closed forms avoid building length-M arrays for very large M
    g2 = alpha**2 * p.h**2
    if scheme == "mac":
        return M**2 * g2 * p.c**2 / (M * g2 * p.sigma_v2 + p.sigma_n2)
    return M * g2 * p.c**2 / (g2 * p.sigma_v2 + p.sigma_n2)


def exact_symmetric(M, p: SymmetricParams, scheme: str = "mac", scaling: str = "none"):
    """Exact steady state for the symmetric configuration, vectorised over ``M``."""
    Ms = np.atleast_1d(np.asarray(M, dtype=float))
    out = np.array([steady_state_from_snr(symmetric_snr(m, p, scheme, scaling), p.model) for m in Ms])
    return float(out[0]) if np.ndim(M) == 0 else out


def general_bounds(M, bounds: ParamBounds, model: SystemModel, sigma_n2, scaling: str = "inv_sqrt_M"):
    """Leading-order sandwich on the multi-access steady state for bounded parameters.

    With ``alpha_i c_i > 0`` and ``|alpha_i| = 1/sqrt(M)`` (``scaling =
    "inv_sqrt_M"``) or ``1`` (``"none"``).  The upper end is a strict bound
    for every ``M`` because ``P <= sigma_w2 + a^2 / S``; the lower end holds
    up to O(1/M^2).
    """
    b, a2 = bounds, model.a**2
    sn = as_float(sigma_n2) if scaling == "inv_sqrt_M" else 0.0
    if scaling not in ("inv_sqrt_M", "none"):
        raise ValueError("scaling must be 'none' or 'inv_sqrt_M'")
    M = np.asarray(M, dtype=float)
    lower = model.sigma_w2 + a2 * (b.h_min**2 * b.sigma_min2 + sn) / (b.h_max**2 * b.c_max**2 * M)
    upper = model.sigma_w2 + a2 * (b.h_max**2 * b.sigma_max2 + sn) / (b.h_min**2 * b.c_min**2 * M)
    return lower, upper


def equal_power_alphas(sensors: SensorSet, model: SystemModel, *, per_sensor=None, total=None, align_signs=True):
    """Amplifications giving every sensor the same transmit power.

    Exactly one of ``per_sensor`` (power ``gamma`` each) or ``total`` (shared
    equally, ``gamma_total / M`` each) must be given.  With ``align_signs``
    the sign of each ``alpha_i`` follows ``c_i`` so contributions add
    coherently in the multi-access scheme.
    """
    if (per_sensor is None) == (total is None):
        raise ValueError("give exactly one of per_sensor or total")
    gamma = per_sensor if per_sensor is not None else total / sensors.M
    if gamma <= 0:
        raise ValueError("power budget must be positive")
    alphas = np.sqrt(gamma / sensor_power_coefficients(sensors, model))
    if align_signs:
        alphas = np.where(sensors.c < 0, -alphas, alphas)
    return alphas


def equal_power_bounds(M, bounds: ParamBounds, model: SystemModel, sigma_n2, *, per_sensor=None, total=None):
    """Leading-order sandwich for the multi-access scheme under equal power.

    Uses the extreme amplifications over the parameter box; the upper value
    is a strict bound on ``P_inf`` for every ``M``.
    """
    if (per_sensor is None) == (total is None):
        raise ValueError("give exactly one of per_sensor or total")
    M = np.asarray(M, dtype=float)
    gamma = per_sensor if per_sensor is not None else total / M
    one = 1.0 - model.a**2
    b = bounds
    a2_max = gamma * one / (b.c_min**2 * model.sigma_w2 + b.sigma_min2 * one)
    a2_min = gamma * one / (b.c_max**2 * model.sigma_w2 + b.sigma_max2 * one)
    sn = as_float(sigma_n2)
    lo_ratio = (M * a2_min * b.h_min**2 * b.sigma_min2 + sn) / (M**2 * a2_max * b.h_max**2 * b.c_max**2)
    hi_ratio = (M * a2_max * b.h_max**2 * b.sigma_max2 + sn) / (M**2 * a2_min * b.h_min**2 * b.c_min**2)
    return model.sigma_w2 + model.a**2 * lo_ratio, model.sigma_w2 + model.a**2 * hi_ratio


def ideal_rate_bound(sensors: SensorSet, model: SystemModel) -> float:
    """Steady state when every measurement reaches the fusion center noiselessly.

    This lower-bounds the steady state of any amplification, channel and
    receiver noise for the same sensors.
    """
    return steady_state_from_snr(float(np.sum(sensors.c**2 / sensors.sigma_v2)), model)


@dataclass(frozen=True)
class AlternatingWitness:
    block_ends: np.ndarray
    P: np.ndarray
    gap: float


def alternating_blocks_witness(
    first: tuple[float, float, float] = (1.0, 1.0, 1.0),
    second: tuple[float, float, float] = (1.0, 1.0, 0.5),
    model: SystemModel = SystemModel(0.8, 1.5),
    sigma_n2: float = 1.0,
    blocks: int = 5,
) -> AlternatingWitness:
    """Orthogonal scheme with ``alpha_i = 1/sqrt(M)`` whose steady state keeps oscillating.

    Sensors come in blocks of ``10^j`` (``j = 1..blocks``) alternating
    between two ``(c, sigma_v2, h)`` parameter sets.  ``gap`` is the smallest
    distance between the steady state at the end of a second-set block and
    at the end of a first-set block, skipping the first block; it stays
    bounded away from zero as blocks are added.
    """
    sizes = [10**j for j in range(1, blocks + 1)]
    sets = [first if j % 2 == 0 else second for j in range(blocks)]
    c = np.concatenate([np.full(n, s[0]) for n, s in zip(sizes, sets)])
    sv = np.concatenate([np.full(n, s[1]) for n, s in zip(sizes, sets)])
    h = np.concatenate([np.full(n, s[2]) for n, s in zip(sizes, sets)])
    ends = np.cumsum(sizes)
    P = []
    for m in ends:
        S = orth_snr(np.full(m, 1.0 / np.sqrt(m)), h[:m], SensorSet(c[:m], sv[:m]), sigma_n2).snr
        P.append(steady_state_from_snr(S, model))
    P = np.array(P)
    tail_first, tail_second = P[2::2], P[1::2]
    hi, lo = (tail_second, tail_first) if tail_second.mean() > tail_first.mean() else (tail_first, tail_second)
    return AlternatingWitness(ends, P, float(hi.min() - lo.max()))


def exact_general(alphas, h, sensors: SensorSet, model: SystemModel, sigma_n2, scheme: str = "mac") -> float:
    snr = mac_snr if scheme == "mac" else orth_snr
    return steady_state_from_snr(snr(alphas, h, sensors, sigma_n2).snr, model)
