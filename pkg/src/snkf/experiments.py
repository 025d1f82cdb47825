"""Seeded reproduction of the six numerical studies as plot-ready tables.

Every table has the columns ``curve,M,value,stderr``.  Monte Carlo
experiments draw one independent seed per ``(M, realization)`` pair from
the master seed, so results do not depend on how work is split across
processes.  Realizations for which a curve is infeasible are excluded from
that curve's mean and counted.
"""

from __future__ import annotations

import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from .alloc import AllocationProblem, InfeasibleError, equal_power_solution, solve
from .asymptotics import ParamBounds, SymmetricParams, asympt_mac_scaled, general_bounds
from .core import SensorSet, SystemModel
from .fading import FadingModel, GreedyRunConfig, greedy_allocations, sample_channels
from .kalman import mac_snr, steady_state_from_snr
from .nocsi import ChannelStatistics, allocate_nocsi, build_effective_model, steady_state_nocsi

EXPERIMENTS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6")

DEFAULT_GRIDS = {
    "fig1": "1:100:1",
    "fig2": "10:200:10",
    "fig3": "5:50:5",
    "fig4": "5:50:5",
    "fig5": "5:50:5",
    "fig6": "5:50:5",
}
DEFAULT_REALIZATIONS = {"fig2": 1, "fig3": 1000, "fig4": 1000, "fig5": 100, "fig6": 100}

# shared physical constants of the allocation studies
STATIC_MODEL = SystemModel(0.9, 1.0)
STATIC_NOISE = 1e-9
TARGET_D = 2.0
BUDGET = 1e-3
CHI2_FLOOR = 1e-8


class ExperimentError(ValueError):
    pass


def parse_grid(text: str) -> list[int]:
    """``a:b:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, s = (int(v) for v in text.split(":"))
            if s <= 0 or b < a:
                raise ValueError
            grid = list(range(a, b + 1, s))
        else:
            grid = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ExperimentError(f"invalid M grid {text!r}; expected a:b:step") from None
    if not grid or min(grid) < 1:
        raise ExperimentError("M grid must be non-empty with M >= 1")
    return grid


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    m_grid: tuple = ()
    realizations: Optional[int] = None
    steps: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ExperimentError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not self.m_grid:
            object.__setattr__(self, "m_grid", tuple(parse_grid(DEFAULT_GRIDS[self.experiment])))
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        if self.realizations is None:
            object.__setattr__(self, "realizations", DEFAULT_REALIZATIONS.get(self.experiment, 1))
        if self.realizations < 1 or self.steps < 1 or self.workers < 1:
            raise ExperimentError("realizations, steps and workers must be >= 1")
        if min(self.m_grid) < 1:
            raise ExperimentError("M grid must contain M >= 1")

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        d["m_grid"] = list(self.m_grid)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def provenance_lines(seed, config_hash: str) -> list[str]:
    return [f"seed={seed}", f"version={__version__}", f"config_hash={config_hash}"]


@dataclass
class Table:
    name: str
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, curve: str, M: int, value: float, stderr: float = 0.0):
        self.rows.append((curve, int(M), float(value), float(stderr)))

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in list(header_lines) + [f"table={self.name}"] + self.notes:
            buf.write(f"# {line}\n")
        buf.write("curve,M,value,stderr\n")
        for curve, M, v, s in self.rows:
            buf.write(f"{curve},{M},{v!r},{s!r}\n")
        return buf.getvalue()

    def series(self, curve: str) -> dict:
        return {M: v for c, M, v, _ in self.rows if c == curve}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    tables: dict
    samples: dict = field(default_factory=dict)

    def header(self) -> list[str]:
        return provenance_lines(self.config.seed, self.config.config_hash()) + [f"experiment={self.config.experiment}"]

    def csv(self, name: str) -> str:
        return self.tables[name].to_csv(self.header())


def _summarise(table: Table, curve: str, M: int, values: np.ndarray) -> None:
    ok = np.isfinite(values)
    n = int(ok.sum())
    if n < len(values):
        table.notes.append(f"excluded[{curve},M={M}]={len(values) - n}")
    if n == 0:
        table.add(curve, M, float("nan"), float("nan"))
        return
    v = values[ok]
    se = float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    table.add(curve, M, float(np.mean(v)), se)


# -- deterministic figures ---------------------------------------------------------


def fig1_params() -> SymmetricParams:
    return SymmetricParams(c=1.0, sigma_v2=1.0, h=0.8, model=SystemModel(0.8, 1.5), sigma_n2=1.0)


def _fig1(cfg: ExperimentConfig) -> ExperimentResult:
    from .asymptotics import exact_symmetric

    p = fig1_params()
    a, b = Table("fig1a"), Table("fig1b")
    coef = p.model.a**2 * (p.sigma_v2 + p.sigma_n2 / p.h**2) / p.c**2
    for M in cfg.m_grid:
        exact = exact_symmetric(M, p, "mac", "inv_sqrt_M")
        a.add("exact", M, exact)
        a.add("asymptotic", M, float(asympt_mac_scaled(M, p)))
        b.add("exact_minus_sigma_w2", M, exact - p.model.sigma_w2)
        b.add("leading_term", M, coef / M)
    return ExperimentResult(cfg, {"fig1a": a, "fig1b": b})


FIG2_BOUNDS = ParamBounds(0.5, 1.0, 0.5, 1.0, 0.5, 1.0)
FIG2_MODEL = SystemModel(0.9, 1.0)
FIG2_NOISE = 1.0


def _seed(cfg: ExperimentConfig, M: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.seed, spawn_key=(int(M), int(r)))


def _fig2_one(args):
    cfg, M, r = args
    rng = np.random.default_rng(_seed(cfg, M, r))
    b = FIG2_BOUNDS
    c = rng.uniform(b.c_min, b.c_max, M)
    sv = rng.uniform(b.sigma_min2, b.sigma_max2, M)
    h = rng.uniform(b.h_min, b.h_max, M)
    S = mac_snr(np.full(M, 1 / np.sqrt(M)), h, SensorSet(c, sv), FIG2_NOISE).snr
    return {"exact": steady_state_from_snr(S, FIG2_MODEL)}


# -- Monte Carlo figures -------------------------------------------------------------


def draw_sensor_noise(rng: np.random.Generator, M: int) -> tuple[np.ndarray, int]:
    """``chi^2(1)`` draws as squared normals, redrawing values below the floor."""
    out = rng.standard_normal(M) ** 2
    redraws = 0
    bad = out < CHI2_FLOOR
    while np.any(bad):
        redraws += int(bad.sum())
        out[bad] = rng.standard_normal(int(bad.sum())) ** 2
        bad = out < CHI2_FLOOR
    return out, redraws


def _static_one(args):
    cfg, M, r, scheme = args
    rng = np.random.default_rng(_seed(cfg, M, r))
    sv, redraws = draw_sensor_noise(rng, M)
    d = rng.uniform(20.0, 100.0, M)
    h = d**-2.0
    sensors = SensorSet(np.ones(M), sv)
    from .alloc import build_problem

    out = {"redraws": redraws}
    model = STATIC_MODEL
    pD = build_problem(model, sensors, h, STATIC_NOISE, D=TARGET_D, scheme=scheme)
    for name, fn in (("optimal", solve), ("equal", equal_power_solution)):
        try:
            out[f"a:{name}"] = fn(pD).total_power
        except InfeasibleError:
            out[f"a:{name}"] = np.nan
    pG = build_problem(model, sensors, h, STATIC_NOISE, gamma_total=BUDGET, scheme=scheme)
    out["b:optimal"] = steady_state_from_snr(solve(pG).snr, model)
    out["b:equal"] = steady_state_from_snr(equal_power_solution(pG).snr, model)
    return out


def _fading_one(args):
    cfg, M, r, scheme = args
    ss = _seed(cfg, M, r)
    param_seed, channel_seed = ss.spawn(2)
    rng = np.random.default_rng(param_seed)
    sv, redraws = draw_sensor_noise(rng, M)
    d = rng.uniform(20.0, 100.0, M)
    mu = rng.uniform(0.5, 1.0, M)
    sensors = SensorSet(np.ones(M), sv)
    model = STATIC_MODEL
    fading = FadingModel(d, mu)
    H = sample_channels(fading, cfg.steps, channel_seed).magnitudes
    out = {"redraws": redraws}

    cfg_a = GreedyRunConfig(cfg.steps, D=TARGET_D, scheme=scheme, policy="best-effort")
    alphas, Ps, feas = greedy_allocations(model, sensors, STATIC_NOISE, H, cfg_a, model.state_variance)
    power = np.sum(alphas**2 * (sensors.c**2 * model.state_variance + sensors.sigma_v2), axis=1)
    out["a:full_csi"] = float(np.mean(power)) if feas.all() else np.nan
    cfg_b = GreedyRunConfig(cfg.steps, gamma_total=BUDGET, scheme=scheme)
    _, Ps, _ = greedy_allocations(model, sensors, STATIC_NOISE, H, cfg_b, model.state_variance)
    out["b:full_csi"] = float(np.mean(Ps[1:]))

    stats = ChannelStatistics.from_fading(fading)
    try:
        out["a:no_csi"] = allocate_nocsi(model, sensors, stats, STATIC_NOISE, D=TARGET_D, scheme=scheme).total_power
    except InfeasibleError:
        out["a:no_csi"] = np.nan
    sol = allocate_nocsi(model, sensors, stats, STATIC_NOISE, gamma_total=BUDGET, scheme=scheme)
    eff = build_effective_model(model, sensors, stats, sol.alphas, STATIC_NOISE, scheme)
    out["b:no_csi"] = steady_state_nocsi(eff, model)
    return out


_MC = {
    "fig2": (_fig2_one, None),
    "fig3": (_static_one, "mac"),
    "fig4": (_static_one, "orth"),
    "fig5": (_fading_one, "mac"),
    "fig6": (_fading_one, "orth"),
}


def _run_tasks(fn, tasks, workers: int):
    if workers == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _monte_carlo(cfg: ExperimentConfig) -> ExperimentResult:
    fn, scheme = _MC[cfg.experiment]
    tasks = [(cfg, M, r) if scheme is None else (cfg, M, r, scheme) for M in cfg.m_grid for r in range(cfg.realizations)]
    results = _run_tasks(fn, tasks, cfg.workers)
    samples: dict = {}
    redraws = 0
    for t, res in zip(tasks, results):
        M = t[1]
        redraws += res.pop("redraws", 0)
        for key, val in res.items():
            samples.setdefault(key, {}).setdefault(M, []).append(val)
    samples = {k: {M: np.array(v, dtype=float) for M, v in d.items()} for k, d in samples.items()}

    tables: dict = {}
    if cfg.experiment == "fig2":
        t = Table("fig2")
        for M in cfg.m_grid:
            _summarise(t, "exact", M, samples["exact"][M])
            lo, hi = general_bounds(M, FIG2_BOUNDS, FIG2_MODEL, FIG2_NOISE)
            t.add("lower_bound", M, float(lo))
            t.add("upper_bound", M, float(hi))
        tables["fig2"] = t
        return ExperimentResult(cfg, tables, {("fig2", "exact"): samples["exact"]})

    out_samples = {}
    for key in sorted(samples):
        panel, curve = key.split(":")
        name = f"{cfg.experiment}{panel}"
        t = tables.setdefault(name, Table(name))
        for M in cfg.m_grid:
            _summarise(t, curve, M, samples[key][M])
        out_samples[(name, curve)] = samples[key]
    for t in tables.values():
        t.notes.append(f"chi2_redraws={redraws}")
    return ExperimentResult(cfg, tables, out_samples)


def reproduce(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.experiment == "fig1":
        return _fig1(cfg)
    return _monte_carlo(cfg)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
