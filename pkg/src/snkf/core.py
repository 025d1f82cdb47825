"""Domain model shared by every other module.

A scalar state ``x_{k+1} = a x_k + w_k`` is observed by ``M`` sensors,
``y_i = c_i x + v_i``, which amplify and forward their measurements to a
fusion center over channels with gains ``h_i``.  Receiver noise has variance
``sigma_n2`` per real dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml


class InstabilityError(ValueError):
    """Raised when an operation needs ``|a| < 1`` and does not get it."""


class ScenarioError(ValueError):
    """Scenario validation failure; ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, ndmin=1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemModel:
    a: float
    sigma_w2: float

    @property
    def stable(self) -> bool:
        return abs(self.a) < 1.0

    def require_stable(self) -> None:
        if not self.stable:
            raise InstabilityError(f"|a| = {abs(self.a):g} >= 1; system is not stable")

    @property
    def state_variance(self) -> float:
        return stationary_state_variance(self)


@dataclass(frozen=True)
class Sensor:
    c: float
    sigma_v2: float


@dataclass(frozen=True)
class SensorSet:
    """Ordered sensor population; ``c`` and ``sigma_v2`` are read-only arrays."""

    c: np.ndarray
    sigma_v2: np.ndarray

    def __init__(self, c: Iterable[float], sigma_v2: Iterable[float]):
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "sigma_v2", _frozen(sigma_v2))

    @classmethod
    def from_sensors(cls, sensors: Iterable[Sensor | tuple[float, float]]) -> "SensorSet":
        pairs = [(s.c, s.sigma_v2) if isinstance(s, Sensor) else tuple(s) for s in sensors]
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @classmethod
    def symmetric(cls, M: int, c: float, sigma_v2: float) -> "SensorSet":
        return cls(np.full(M, float(c)), np.full(M, float(sigma_v2)))

    @property
    def M(self) -> int:
        return len(self.c)

    def __len__(self) -> int:
        return self.M

    def __getitem__(self, i: int) -> Sensor:
        return Sensor(float(self.c[i]), float(self.sigma_v2[i]))

    def subset(self, idx) -> "SensorSet":
        return SensorSet(self.c[idx], self.sigma_v2[idx])


@dataclass(frozen=True)
class NoiseModel:
    sigma_n2: float


@dataclass(frozen=True)
class ChannelRealization:
    """Channel gains for one time step.

    ``kind`` is ``"magnitude"`` for real non-negative ``h_i`` (CSI case) or
    ``"complex"`` for complex gains.  ``magnitudes`` is defined for both.
    """

    gains: np.ndarray
    kind: str = "magnitude"

    def __init__(self, gains, kind: str | None = None):
        arr = np.asarray(gains)
        if kind is None:
            kind = "complex" if np.iscomplexobj(arr) else "magnitude"
        dtype = complex if kind == "complex" else float
        object.__setattr__(self, "gains", _frozen(arr, dtype))
        object.__setattr__(self, "kind", kind)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.gains)

    def __len__(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class Amplification:
    """Real beamformed amplification magnitudes; the phase ``h*/|h|`` is implied."""

    alphas: np.ndarray

    def __init__(self, alphas):
        object.__setattr__(self, "alphas", _frozen(alphas))

    def __len__(self) -> int:
        return len(self.alphas)


@dataclass(frozen=True)
class Scenario:
    model: SystemModel
    sensors: SensorSet
    noise: NoiseModel
    channels: ChannelRealization = field(default=None)

    @property
    def M(self) -> int:
        return self.sensors.M

    @property
    def h(self) -> np.ndarray:
        if self.channels is None:
            return np.ones(self.M)
        return self.channels.magnitudes


def as_float(value) -> float:
    """Accept a bare number or any of the noise/model wrappers that carry one."""
    if isinstance(value, NoiseModel):
        return float(value.sigma_n2)
    return float(value)


def as_gains(channels) -> np.ndarray:
    if channels is None:
        return None
    if isinstance(channels, ChannelRealization):
        return channels.magnitudes
    arr = np.asarray(channels)
    return np.abs(arr) if np.iscomplexobj(arr) else arr.astype(float)


def as_alphas(alphas) -> np.ndarray:
    if isinstance(alphas, Amplification):
        return alphas.alphas
    return np.asarray(alphas, dtype=float)


def stationary_state_variance(model: SystemModel) -> float:
    """``E[x^2] = sigma_w2 / (1 - a^2)`` for the stationary process."""
    model.require_stable()
    return model.sigma_w2 / (1.0 - model.a**2)


def transmit_power(alpha, sensor, model: SystemModel):
    """Power ``alpha^2 (c^2 E[x^2] + sigma_v2)`` spent by a sensor.

    ``sensor`` may be a :class:`Sensor`, a ``(c, sigma_v2)`` pair or a whole
    :class:`SensorSet`, in which case ``alpha`` broadcasts against it.
    """
    if isinstance(sensor, (Sensor, SensorSet)):
        c, sv2 = sensor.c, sensor.sigma_v2
    else:
        c, sv2 = sensor
    ex2 = stationary_state_variance(model)
    alpha = np.asarray(alpha, dtype=float)
    out = alpha**2 * (np.asarray(c) ** 2 * ex2 + np.asarray(sv2))
    return float(out) if out.ndim == 0 else out


def sensor_power_coefficients(sensors: SensorSet, model: SystemModel) -> np.ndarray:
    """``kappa_i = c_i^2 E[x^2] + sigma_i^2`` so that ``gamma_i = alpha_i^2 kappa_i``."""
    return sensors.c**2 * stationary_state_variance(model) + sensors.sigma_v2


def _finite(x) -> bool:
    return bool(np.all(np.isfinite(np.asarray(x, dtype=complex if np.iscomplexobj(x) else float))))


def validate_scenario(
    model: SystemModel,
    sensors: SensorSet,
    channels=None,
    noise: NoiseModel | float = 0.0,
    *,
    allow_zero_noise: bool = False,
) -> Scenario:
    """Check every invariant and return a :class:`Scenario`.

    Raises :class:`ScenarioError` carrying the full list of violations.
    ``sigma_n2 == 0`` is accepted only with ``allow_zero_noise=True``.
    """
    problems: list[str] = []
    if not (_finite(model.a) and _finite(model.sigma_w2)):
        problems.append("non-finite value in system model")
    elif model.sigma_w2 <= 0:
        problems.append("nonpositive variance: sigma_w2")

    if sensors.M < 1:
        problems.append("sensor set is empty")
    if not (_finite(sensors.c) and _finite(sensors.sigma_v2)):
        problems.append("non-finite value in sensor parameters")
    else:
        bad = np.flatnonzero(sensors.sigma_v2 <= 0)
        for i in bad:
            problems.append(f"nonpositive variance: sigma_v2 of sensor {i}")

    sn2 = as_float(noise)
    if not math.isfinite(sn2):
        problems.append("non-finite value: sigma_n2")
    elif sn2 < 0 or (sn2 == 0 and not allow_zero_noise):
        problems.append("nonpositive variance: sigma_n2")

    if channels is not None and not isinstance(channels, ChannelRealization):
        channels = ChannelRealization(channels)
    if channels is not None:
        if len(channels) != sensors.M:
            problems.append(
                f"dimension mismatch: {len(channels)} channel gains for {sensors.M} sensors"
            )
        if not _finite(channels.gains):
            problems.append("non-finite value in channel gains")
        elif channels.kind == "magnitude" and np.any(channels.gains < 0):
            problems.append("negative channel magnitude")

    if problems:
        raise ScenarioError(problems)
    noise = noise if isinstance(noise, NoiseModel) else NoiseModel(sn2)
    return Scenario(model, sensors, noise, channels)


# -- scenario documents -------------------------------------------------------

SCENARIO_FIELDS = {"a", "sigma_w2", "sigma_n2", "sensors", "channels"}
SENSOR_FIELDS = {"c", "sigma_v2"}


def scenario_from_dict(doc: Mapping[str, Any], *, allow_zero_noise: bool = False) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioError(["scenario document must be a mapping"])
    problems = [f"unknown field: {k}" for k in doc if k not in SCENARIO_FIELDS]
    problems += [f"missing field: {k}" for k in ("a", "sigma_w2", "sigma_n2", "sensors") if k not in doc]
    sensors = doc.get("sensors") or []
    for i, s in enumerate(sensors):
        if not isinstance(s, Mapping):
            problems.append(f"sensor {i} must be a mapping")
            continue
        problems += [f"unknown field in sensor {i}: {k}" for k in s if k not in SENSOR_FIELDS]
        problems += [f"missing field in sensor {i}: {k}" for k in SENSOR_FIELDS if k not in s]
    if problems:
        raise ScenarioError(problems)

    channels = doc.get("channels")
    if channels is not None:
        if any(isinstance(g, (list, tuple)) for g in channels):
            try:
                channels = ChannelRealization([complex(g[0], g[1]) for g in channels], "complex")
            except (TypeError, IndexError, ValueError):
                raise ScenarioError(["complex channel gains must be [re, im] pairs"]) from None
        else:
            channels = ChannelRealization([float(g) for g in channels], "magnitude")
    try:
        model = SystemModel(float(doc["a"]), float(doc["sigma_w2"]))
        sset = SensorSet([float(s["c"]) for s in sensors], [float(s["sigma_v2"]) for s in sensors])
        noise = NoiseModel(float(doc["sigma_n2"]))
    except (TypeError, ValueError) as exc:
        raise ScenarioError([f"non-numeric value: {exc}"]) from None
    return validate_scenario(model, sset, channels, noise, allow_zero_noise=allow_zero_noise)


def scenario_to_dict(scenario: Scenario) -> dict:
    doc = {
        "a": scenario.model.a,
        "sigma_w2": scenario.model.sigma_w2,
        "sigma_n2": scenario.noise.sigma_n2,
        "sensors": [
            {"c": float(c), "sigma_v2": float(v)}
            for c, v in zip(scenario.sensors.c, scenario.sensors.sigma_v2)
        ],
    }
    ch = scenario.channels
    if ch is not None:
        if ch.kind == "complex":
            doc["channels"] = [[float(g.real), float(g.imag)] for g in ch.gains]
        else:
            doc["channels"] = [float(g) for g in ch.gains]
    return doc


def load_document(path: str | Path) -> Any:
    """Read a YAML or JSON document (JSON parses as YAML)."""
    with open(path) as fh:
        return yaml.safe_load(fh)


def load_scenario(path: str | Path, **kwargs) -> Scenario:
    return scenario_from_dict(load_document(path), **kwargs)


def dump_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(scenario), fh, sort_keys=False)
