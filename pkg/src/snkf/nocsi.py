"""Linear MMSE estimation when only channel statistics are known.

The received signal is split into real and imaginary parts.  Each
sensor's product ``g = alpha~ h~`` is random; its mean forms the effective
observation vector and its fluctuations act as extra, state-dependent noise
whose variance uses the stationary ``E[x^2]``.  Amplifications are
time-invariant, so the effective model and its steady state are computed
once.

Writing ``alpha~ = p + i q`` and ``h~ = X + i Y`` (independent parts),
``Re g = p X - q Y`` and ``Im g = q X + p Y``; every moment below follows
from the means and variances of ``X`` and ``Y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .alloc import AllocationProblem, AllocationSolution, covariance_targets, solve
from .core import SensorSet, SystemModel, as_float, sensor_power_coefficients, stationary_state_variance
from .kalman import steady_state_from_snr

DET_FLOOR = 1e-300


class CircularFadingError(ValueError):
    """Zero-mean channels carry no usable signal for this estimator."""


@dataclass(frozen=True)
class ChannelStatistics:
    mean_re: np.ndarray
    mean_im: np.ndarray
    var_re: np.ndarray
    var_im: np.ndarray

    def __post_init__(self):
        arrays = [np.array(getattr(self, n), dtype=float, ndmin=1) for n in ("mean_re", "mean_im", "var_re", "var_im")]
        arrays = np.broadcast_arrays(*arrays)
        for name, arr in zip(("mean_re", "mean_im", "var_re", "var_im"), arrays):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.var_re < 0) or np.any(self.var_im < 0):
            raise ValueError("channel variances must be non-negative")

    @classmethod
    def identical(cls, mean, variance) -> "ChannelStatistics":
        """Real and imaginary parts both ``N(mean, variance)``."""
        return cls(mean, mean, variance, variance)

    @classmethod
    def deterministic(cls, gains) -> "ChannelStatistics":
        g = np.asarray(gains, dtype=complex)
        return cls(g.real, g.imag, np.zeros(g.shape), np.zeros(g.shape))

    @classmethod
    def from_fading(cls, fading) -> "ChannelStatistics":
        m, v = fading.mean, fading.component_variance
        return cls(m.real, m.imag, v, v)

    @classmethod
    def from_dict(cls, doc) -> "ChannelStatistics":
        keys = {"mean_re", "mean_im", "var_re", "var_im"}
        rows = doc.get("sensors") if isinstance(doc, Mapping) else doc
        if not isinstance(rows, list) or not rows:
            raise ValueError("statistics document needs a non-empty list of sensors")
        for i, r in enumerate(rows):
            if not isinstance(r, Mapping) or set(r) != keys:
                raise ValueError(f"sensor {i} statistics must have exactly the fields {sorted(keys)}")
        return cls(*(np.array([float(r[k]) for r in rows]) for k in ("mean_re", "mean_im", "var_re", "var_im")))

    def to_dict(self) -> dict:
        return {"sensors": [
            {"mean_re": float(a), "mean_im": float(b), "var_re": float(c), "var_im": float(d)}
            for a, b, c, d in zip(self.mean_re, self.mean_im, self.var_re, self.var_im)
        ]}

    @property
    def M(self) -> int:
        return len(self.mean_re)

    @property
    def mean(self) -> np.ndarray:
        return self.mean_re + 1j * self.mean_im

    @property
    def e2_re(self) -> np.ndarray:
        return self.var_re + self.mean_re**2

    @property
    def e2_im(self) -> np.ndarray:
        return self.var_im + self.mean_im**2

    def sample(self, steps: int, rng) -> np.ndarray:
        """Gaussian draws of shape ``(steps, M)``."""
        rng = np.random.default_rng(rng)
        X = self.mean_re + np.sqrt(self.var_re) * rng.standard_normal((steps, self.M))
        Y = self.mean_im + np.sqrt(self.var_im) * rng.standard_normal((steps, self.M))
        return X + 1j * Y


@dataclass(frozen=True)
class ProductMoments:
    """Moments of ``Re g`` and ``Im g`` for ``g = alpha~ h~``, per sensor."""

    mean_re: np.ndarray
    mean_im: np.ndarray
    var_re: np.ndarray
    var_im: np.ndarray
    cov: np.ndarray

    @property
    def e2_re(self) -> np.ndarray:
        return self.var_re + self.mean_re**2

    @property
    def e2_im(self) -> np.ndarray:
        return self.var_im + self.mean_im**2

    @property
    def e_reim(self) -> np.ndarray:
        return self.cov + self.mean_re * self.mean_im


def mean_beamform_alphas(alphas, stats: ChannelStatistics) -> np.ndarray:
    """Complex amplifications ``alpha_i conj(E h_i) / |E h_i|``."""
    m = stats.mean
    mag = np.abs(m)
    if np.any(mag == 0):
        raise CircularFadingError("circularly symmetric fading unusable: a channel has zero mean")
    return np.asarray(alphas, dtype=float) * np.conj(m) / mag


def derive_moments(stats: ChannelStatistics, alphas, *, beamform: bool = True) -> ProductMoments:
    """Moments of the received product for real (``beamform``) or complex amplifications."""
    at = mean_beamform_alphas(alphas, stats) if beamform else np.asarray(alphas, dtype=complex)
    p, q = at.real, at.imag
    mX, mY, vX, vY = stats.mean_re, stats.mean_im, stats.var_re, stats.var_im
    return ProductMoments(
        mean_re=p * mX - q * mY,
        mean_im=q * mX + p * mY,
        var_re=p**2 * vX + q**2 * vY,
        var_im=q**2 * vX + p**2 * vY,
        cov=p * q * (vX - vY),
    )


def printed_moments(stats: ChannelStatistics, alphas):
    """Mean, variance and second moment of ``Re g`` under mean beamforming, in the textbook form.

    Kept as a separate code path from :func:`derive_moments`.
    """
    a2 = np.asarray(alphas, dtype=float) ** 2
    m2 = stats.mean_re**2 + stats.mean_im**2
    if np.any(m2 == 0):
        raise CircularFadingError("circularly symmetric fading unusable: a channel has zero mean")
    mean = np.asarray(alphas, dtype=float) * np.sqrt(m2)
    var = a2 / m2 * (stats.mean_re**2 * stats.var_re + stats.mean_im**2 * stats.var_im)
    e2 = a2 / m2 * (
        stats.mean_re**2 * stats.e2_re + 2 * stats.mean_re**2 * stats.mean_im**2 + stats.mean_im**2 * stats.e2_im
    )
    return mean, var, e2


@dataclass(frozen=True)
class EffectiveModel:
    """Effective observation and noise.

    Multi-access: ``C`` has shape ``(2,)`` and ``R`` ``(2, 2)``.  Orthogonal:
    ``C`` is ``(M, 2)`` and ``R`` holds the ``M`` diagonal ``2 x 2`` blocks,
    shape ``(M, 2, 2)``.
    """

    C: np.ndarray
    R: np.ndarray
    S: float
    scheme: str

    @property
    def C_stacked(self) -> np.ndarray:
        return self.C.reshape(-1)

    @property
    def R_dense(self) -> np.ndarray:
        if self.scheme == "mac":
            return self.R
        M = self.R.shape[0]
        out = np.zeros((2 * M, 2 * M))
        for i in range(M):
            out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = self.R[i]
        return out


def _inv2(R: np.ndarray) -> np.ndarray:
    """Closed-form inverse of one or a stack of symmetric ``2 x 2`` matrices."""
    a, b, d = R[..., 0, 0], R[..., 0, 1], R[..., 1, 1]
    det = a * d - b * b
    if np.any(det < DET_FLOOR):
        raise np.linalg.LinAlgError("effective noise covariance is singular")
    inv = np.empty_like(R)
    inv[..., 0, 0], inv[..., 1, 1] = d / det, a / det
    inv[..., 0, 1] = inv[..., 1, 0] = -b / det
    return inv


def _quad2(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    Ri = _inv2(R)
    return np.einsum("...i,...ij,...j->...", C, Ri, C)


def build_effective_model(model: SystemModel, sensors: SensorSet, stats: ChannelStatistics, alphas, noise,
                          scheme: str = "mac", *, beamform: bool = True) -> EffectiveModel:
    """Effective observation and noise covariance for either scheme."""
    ex2 = stationary_state_variance(model)
    mo = derive_moments(stats, alphas, beamform=beamform)
    c, sv, sn2 = sensors.c, sensors.sigma_v2, as_float(noise)
    Ci = np.stack([mo.mean_re * c, mo.mean_im * c], axis=-1)
    blocks = np.empty((sensors.M, 2, 2))
    blocks[:, 0, 0] = mo.var_re * c**2 * ex2 + mo.e2_re * sv
    blocks[:, 1, 1] = mo.var_im * c**2 * ex2 + mo.e2_im * sv
    blocks[:, 0, 1] = blocks[:, 1, 0] = mo.cov * c**2 * ex2 + mo.e_reim * sv
    noise_block = sn2 * np.eye(2)
    if scheme == "mac":
        C, R = Ci.sum(axis=0), blocks.sum(axis=0) + noise_block
        S = float(_quad2(C, R))
    elif scheme == "orth":
        C, R = Ci, blocks + noise_block
        S = float(np.sum(_quad2(C, R)))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return EffectiveModel(C, R, max(S, 0.0), scheme)


def simplified_snr(model: SystemModel, sensors: SensorSet, stats: ChannelStatistics, alphas, noise,
                   scheme: str = "mac") -> float:
    """Scalar SNR under mean beamforming, using :func:`printed_moments`.

    Exact when the effective real/imaginary noise is uncorrelated (e.g.
    identically distributed channel components).
    """
    ex2 = stationary_state_variance(model)
    mean, var, e2 = printed_moments(stats, alphas)
    c, sv, sn2 = sensors.c, sensors.sigma_v2, as_float(noise)
    noise_terms = var * c**2 * ex2 + e2 * sv
    if scheme == "mac":
        return float(np.sum(mean * c)) ** 2 / (float(np.sum(noise_terms)) + sn2)
    return float(np.sum((mean * c) ** 2 / (noise_terms + sn2)))


@dataclass(frozen=True)
class MmseStep:
    x_post: float
    P_post: float
    x_prior: float
    P_prior: float


def mmse_filter_step(x_hat: float, P: float, z, eff: EffectiveModel, model: SystemModel) -> MmseStep:
    """Correct the prior ``(x_hat, P)`` with measurement ``z`` and predict one step ahead.

    ``z`` is complex (multi-access) or a length-``M`` complex array
    (orthogonal).  The prediction adds ``sigma_w2`` to ``a^2 P_post``.
    """
    z = np.asarray(z, dtype=complex)
    if eff.scheme == "mac":
        zz = np.array([z.real, z.imag]).reshape(2)
        inn_cov = P * np.outer(eff.C, eff.C) + eff.R
        gain = P * (_inv2(inn_cov) @ eff.C)
        x_post = x_hat + float(gain @ (zz - eff.C * x_hat))
        P_post = P - P * float(gain @ eff.C)
    else:
        zz = np.stack([z.real, z.imag], axis=-1)
        Ri = _inv2(eff.R)
        info = float(np.einsum("mi,mij,mj->", eff.C, Ri, eff.C))
        P_post = P / (1.0 + P * info)
        x_post = x_hat + P_post * float(np.einsum("mi,mij,mj->", eff.C, Ri, zz - eff.C * x_hat))
    return MmseStep(x_post, P_post, model.a * x_post, model.a**2 * P_post + model.sigma_w2)


def steady_state_nocsi(eff: EffectiveModel, model: SystemModel) -> float:
    return steady_state_from_snr(eff.S, model)


def covariance_iteration(eff: EffectiveModel, model: SystemModel, P0: Optional[float] = None,
                         steps: int = 100_000, tol: float = 1e-14) -> float:
    """Iterate the prior covariance through :func:`mmse_filter_step` until it settles."""
    P = model.state_variance if P0 is None else P0
    zero = 0j if eff.scheme == "mac" else np.zeros(eff.C.shape[0], complex)
    for _ in range(steps):
        nxt = mmse_filter_step(0.0, P, zero, eff, model).P_prior
        if abs(nxt - P) <= tol * nxt:
            return nxt
        P = nxt
    return P


@dataclass
class NocsiRun:
    x_true: np.ndarray
    x_prior: np.ndarray
    P_prior: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return self.x_true - self.x_prior


def simulate_nocsi(model: SystemModel, sensors: SensorSet, stats: ChannelStatistics, alphas, noise, steps: int,
                   *, scheme: str = "mac", rng=None, gain_scale: Optional[float] = None,
                   channels: Optional[np.ndarray] = None) -> NocsiRun:
    """Monte Carlo run of the statistics-only filter over Gaussian channel draws.

    With ``gain_scale`` the filter uses the steady-state gain multiplied by
    that factor instead of the time-varying optimal gain.
    """
    rng = np.random.default_rng(rng)
    eff = build_effective_model(model, sensors, stats, alphas, noise, scheme)
    at = mean_beamform_alphas(alphas, stats)
    H = stats.sample(steps, rng) if channels is None else np.asarray(channels, dtype=complex)
    M, sn, sv = sensors.M, np.sqrt(as_float(noise)), np.sqrt(sensors.sigma_v2)
    x = rng.normal(0.0, np.sqrt(model.state_variance))
    xs, xh, Ps = np.empty(steps), np.empty(steps), np.empty(steps)
    x_hat, P = 0.0, model.state_variance
    fixed = None
    if gain_scale is not None:
        P_ss = steady_state_nocsi(eff, model)
        if scheme == "mac":
            fixed = gain_scale * P_ss * (_inv2(P_ss * np.outer(eff.C, eff.C) + eff.R) @ eff.C)
        else:
            Ri = _inv2(eff.R)
            fixed = gain_scale * P_ss / (1 + P_ss * eff.S) * np.einsum("mij,mj->mi", Ri, eff.C)
    for k in range(steps):
        xs[k], xh[k], Ps[k] = x, x_hat, P
        y = sensors.c * x + sv * rng.standard_normal(M)
        g = at * H[k]
        if scheme == "mac":
            z = np.sum(g * y) + sn * (rng.standard_normal() + 1j * rng.standard_normal())
        else:
            z = g * y + sn * (rng.standard_normal(M) + 1j * rng.standard_normal(M))
        if fixed is None:
            st = mmse_filter_step(x_hat, P, z, eff, model)
            x_hat, P = st.x_prior, st.P_prior
        else:
            if scheme == "mac":
                x_post = x_hat + float(fixed @ (np.array([z.real, z.imag]) - eff.C * x_hat))
            else:
                zz = np.stack([z.real, z.imag], axis=-1)
                x_post = x_hat + float(np.sum(fixed * (zz - eff.C * x_hat)))
            x_hat = model.a * x_post
        x = model.a * x + np.sqrt(model.sigma_w2) * rng.standard_normal()
    return NocsiRun(xs, xh, Ps)


def steady_state_curve(Ms, model: SystemModel, c: float, sigma_v2: float, stat_mean: complex, stat_var: float,
                       alpha_of_M, noise, scheme: str = "mac") -> np.ndarray:
    """Steady state versus ``M`` for identical sensors and channel statistics.

    ``alpha_of_M`` maps ``M`` to the common real amplification.
    """
    out = []
    for M in np.atleast_1d(Ms):
        M = int(M)
        stats = ChannelStatistics(np.full(M, stat_mean.real), np.full(M, stat_mean.imag),
                                  np.full(M, stat_var), np.full(M, stat_var))
        eff = build_effective_model(model, SensorSet.symmetric(M, c, sigma_v2), stats,
                                    np.full(M, alpha_of_M(M)), noise, scheme)
        out.append(steady_state_nocsi(eff, model))
    return np.array(out)


def nocsi_problem_data(model: SystemModel, sensors: SensorSet, stats: ChannelStatistics):
    """``(kappa, rho, tau)`` for the mean-beamformed SNR, checking degree-2 homogeneity."""
    ex2 = stationary_state_variance(model)
    terms = []
    for scale in (1.0, 2.0):
        _, var, e2 = printed_moments(stats, np.full(stats.M, scale))
        terms.append((var * sensors.c**2 * ex2 + e2 * sensors.sigma_v2) / scale**2)
    if not np.allclose(terms[0], terms[1], rtol=1e-12, atol=0.0):
        raise AssertionError("noise terms are not homogeneous of degree 2 in alpha")
    rho = np.abs(stats.mean) * sensors.c
    return sensor_power_coefficients(sensors, model), rho, terms[0]


def allocate_nocsi(model: SystemModel, sensors: SensorSet, stats: ChannelStatistics, noise, *,
                   D: Optional[float] = None, gamma_total: Optional[float] = None,
                   scheme: str = "mac") -> AllocationSolution:
    """Solve the allocation once for the time-invariant statistics-only SNR.

    Returned ``alphas`` are real; the transmitted amplifications are
    ``mean_beamform_alphas(solution.alphas, stats)``.
    """
    if (D is None) == (gamma_total is None):
        raise ValueError("give exactly one of D or gamma_total")
    kappa, rho, tau = nocsi_problem_data(model, sensors, stats)
    sn2 = as_float(noise)
    if D is not None:
        x, y = covariance_targets(model, D)
        obj = "min_sum_power_mac" if scheme == "mac" else "min_sum_power_orth"
        problem = AllocationProblem(kappa, rho, tau, sn2, obj, x=x, y=y)
    else:
        obj = "min_covariance_mac" if scheme == "mac" else "min_covariance_orth"
        problem = AllocationProblem(kappa, rho, tau, sn2, obj, gamma_total=gamma_total)
    return solve(problem)
