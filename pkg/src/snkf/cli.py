"""Command-line harness: ``snkf <command> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible problem.
Every output starts with ``#`` comment lines carrying the seed, package
version and a hash of the effective configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .alloc import AllocationProblem, AllocationError, InfeasibleError, build_problem, solve
from .asymptotics import (
    SymmetricParams,
    asympt_mac_noscale,
    asympt_mac_scaled,
    asympt_orth_noscale,
    asympt_orth_scaled_limit,
    exact_symmetric,
)
from .core import InstabilityError, ScenarioError, load_document, scenario_from_dict
from .experiments import ExperimentConfig, ExperimentError, Table, parse_grid, provenance_lines, reproduce

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
log = logging.getLogger("snkf")


class ConfigError(ValueError):
    pass


def _hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _header(args, extra: dict | None = None) -> list[str]:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "verbose")}
    for k in ("scenario", "stats", "problem", "fading"):
        if cfg.get(k):
            cfg[k + "_content"] = load_document(cfg[k])
    cfg.update(extra or {})
    return provenance_lines(args.seed, _hash(cfg)) + [f"command={args.command}"]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _comments(lines) -> str:
    return "".join(f"# {line}\n" for line in lines)


def _floats(text: str | None):
    if text is None:
        return None
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _constraint(text: str | None):
    if text is None:
        return None, None
    key, _, val = text.partition("=")
    try:
        v = float(val)
    except ValueError:
        raise ConfigError(f"invalid constraint {text!r}; use D=<v> or P=<v>") from None
    if key == "D":
        return v, None
    if key == "P":
        return None, v
    raise ConfigError(f"invalid constraint {text!r}; use D=<v> or P=<v>")


def _scenario(args, **kw):
    if not args.scenario:
        raise ConfigError("--scenario is required for this command")
    return scenario_from_dict(load_document(args.scenario), **kw)


# -- commands ---------------------------------------------------------------------


def cmd_reproduce(args) -> int:
    if not args.experiment:
        raise ConfigError("--experiment is required")
    cfg = ExperimentConfig(
        args.experiment,
        tuple(parse_grid(args.m_grid)) if args.m_grid else (),
        args.realizations,
        args.steps if args.steps is not None else 1000,
        args.seed,
        args.workers,
    )
    result = reproduce(cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name in result.tables:
            (out / f"{name}.csv").write_text(result.csv(name))
    else:
        sys.stdout.write("\n".join(result.csv(name) for name in result.tables))
    return EXIT_OK


def cmd_steady_state(args) -> int:
    from .kalman import scheme_snr, steady_state_from_snr

    scen = _scenario(args, allow_zero_noise=args.snr is not None)
    if args.snr is not None:
        S = float(args.snr)
        if S < 0:
            raise ConfigError("--snr must be non-negative")
    else:
        alphas = _floats(args.alphas)
        alphas = np.ones(scen.M) if alphas is None else alphas
        if len(alphas) != scen.M:
            raise ConfigError(f"--alphas needs {scen.M} values")
        S = scheme_snr(args.scheme, alphas, scen.h, scen.sensors, scen.noise).snr
    P = steady_state_from_snr(S, scen.model)
    text = _comments(_header(args)) + "scheme,S,P_inf\n" + f"{args.scheme},{S!r},{P!r}\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    scen = _scenario(args)
    s = scen.sensors
    if not (np.all(s.c == s.c[0]) and np.all(s.sigma_v2 == s.sigma_v2[0]) and np.all(scen.h == scen.h[0])):
        raise ConfigError("asymptotics needs identical sensors (c, sigma_v2, h)")
    p = SymmetricParams(float(s.c[0]), float(s.sigma_v2[0]), float(scen.h[0]), scen.model, scen.noise.sigma_n2)
    grid = parse_grid(args.m_grid or "1:100:1")
    scaling = args.scaling
    table = Table(f"asymptotics_{args.scheme}_{scaling}")
    for M in grid:
        table.add("exact", M, exact_symmetric(M, p, args.scheme, scaling))
        if args.scheme == "mac":
            approx = asympt_mac_noscale(M, p) if scaling == "none" else asympt_mac_scaled(M, p)
        elif scaling == "none":
            approx = asympt_orth_noscale(M, p)
        else:
            approx = asympt_orth_scaled_limit(M, p).value
        table.add("asymptotic", M, float(approx))
    _emit(table.to_csv(_header(args)), args.out)
    return EXIT_OK


def _generic_problem(doc, args) -> AllocationProblem:
    allowed = {"x", "y", "kappa", "rho", "tau", "sigma_n2", "gamma_total", "objective"}
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown problem fields: {sorted(extra)}")
    D, gamma = _constraint(args.constraint)
    if gamma is not None:
        doc = {**doc, "gamma_total": gamma}
    objective = doc.get("objective")
    if objective is None:
        budget = doc.get("gamma_total") is not None
        objective = {("mac", False): "min_sum_power_mac", ("mac", True): "min_covariance_mac",
                     ("orth", False): "min_sum_power_orth", ("orth", True): "min_covariance_orth"}[(args.scheme, budget)]
    return AllocationProblem(doc["kappa"], doc["rho"], doc["tau"], float(doc["sigma_n2"]), objective,
                             x=doc.get("x"), y=doc.get("y"), gamma_total=doc.get("gamma_total"))


def cmd_allocate(args) -> int:
    if args.problem:
        sol = solve(_generic_problem(load_document(args.problem), args))
    else:
        scen = _scenario(args)
        D, gamma = _constraint(args.constraint)
        if D is None and gamma is None:
            raise ConfigError("--constraint D=<v> or P=<v> is required")
        if args.csi == "none":
            from .nocsi import ChannelStatistics, allocate_nocsi

            if not args.stats:
                raise ConfigError("--csi none needs --stats FILE")
            stats = ChannelStatistics.from_dict(load_document(args.stats))
            if stats.M != scen.M:
                raise ConfigError("statistics and scenario disagree on M")
            sol = allocate_nocsi(scen.model, scen.sensors, stats, scen.noise, D=D, gamma_total=gamma, scheme=args.scheme)
        else:
            problem = build_problem(scen.model, scen.sensors, scen.h, scen.noise, D=D, gamma_total=gamma,
                                    scheme=args.scheme)
            sol = solve(problem)
    text = _comments(_header(args)) + yaml.safe_dump(sol.to_dict(), sort_keys=False)
    _emit(text, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .kalman import run_filter

    scen = _scenario(args)
    steps = args.steps if args.steps is not None else 100
    if args.fading:
        from .fading import FadingModel, GreedyRunConfig, simulate_greedy

        doc = load_document(args.fading)
        allowed = {"distances", "mean_re", "mean_im", "variance", "exponent"}
        if not isinstance(doc, dict) or set(doc) - allowed or "distances" not in doc or "mean_re" not in doc:
            raise ConfigError(f"fading document needs distances and mean_re; allowed fields {sorted(allowed)}")
        fading = FadingModel(**doc)
        D, gamma = _constraint(args.constraint)
        if D is None and gamma is None:
            raise ConfigError("--constraint D=<v> or P=<v> is required with --fading")
        run = simulate_greedy(scen, fading, GreedyRunConfig(
            steps, D=D, gamma_total=gamma, scheme=args.scheme, seed=args.seed,
            policy="strict" if args.strict else "best-effort", gamma_cap=args.gamma_cap))
        trace = run.trace
        notes = [f"infeasible_steps={run.infeasible_steps}"]
    else:
        alphas = _floats(args.alphas)
        alphas = np.ones(scen.M) if alphas is None else alphas
        if len(alphas) != scen.M:
            raise ConfigError(f"--alphas needs {scen.M} values")
        trace = run_filter(scen, alphas, steps, scheme=args.scheme, rng=np.random.default_rng(args.seed))
        notes = []
    _emit(trace.to_csv(comments=_header(args) + notes), args.out)
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snkf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"snkf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario document (YAML or JSON)")
        p.add_argument("--scheme", choices=("mac", "orth"), default="mac")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file (directory for reproduce)")
        p.add_argument("--m-grid", dest="m_grid", help="a:b:step or comma list")
        p.add_argument("--steps", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = common(sub.add_parser("reproduce", help="regenerate one numerical study as CSV"))
    p.add_argument("--experiment", choices=("fig1", "fig2", "fig3", "fig4", "fig5", "fig6"))
    p.add_argument("--realizations", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)

    p = common(sub.add_parser("steady-state", help="steady-state covariance of a scenario"))
    p.add_argument("--alphas", help="comma-separated amplifications (default all 1)")
    p.add_argument("--snr", type=float, help="use this SNR directly")
    p.set_defaults(func=cmd_steady_state)

    p = common(sub.add_parser("asymptotics", help="exact vs leading-order steady state over M"))
    p.add_argument("--scaling", choices=("none", "inv_sqrt_M"), default="none")
    p.set_defaults(func=cmd_asymptotics)

    p = common(sub.add_parser("allocate", help="optimal power allocation"))
    p.add_argument("--constraint", help="D=<covariance target> or P=<total power budget>")
    p.add_argument("--csi", choices=("full", "none"), default="full")
    p.add_argument("--stats", help="channel statistics document for --csi none")
    p.add_argument("--problem", help="generalized problem document {x, y, kappa, rho, tau, sigma_n2, gamma_total}")
    p.set_defaults(func=cmd_allocate)

    p = common(sub.add_parser("simulate", help="simulate the filter and write its trace"))
    p.add_argument("--alphas", help="comma-separated static amplifications (default all 1)")
    p.add_argument("--fading", help="fading model document; enables greedy allocation")
    p.add_argument("--constraint", help="D=<v> or P=<v> for greedy allocation")
    p.add_argument("--strict", action="store_true", help="abort on an infeasible step")
    p.add_argument("--gamma-cap", dest="gamma_cap", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ScenarioError, ExperimentError, InstabilityError, AllocationError,
            ValueError, KeyError, TypeError, OSError, yaml.YAMLError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
