"""Command-line entry point.

Precedence for solver settings, highest first: dedicated flags (``--tol``,
``--seed``), ``--set section.key=value`` overrides, the problem file, built-in
defaults. Exit status: 0 success, 1 a check failed, 2 usage, configuration or
assumption error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .dsl import DslError
from .hamiltonian import isaacs_scan
from .mc import ControlPolicy, McError, estimate_infinite, simulate_paths, solve_bsde_truncated
from .problem import (
    AssumptionError,
    GameProblem,
    ProblemError,
    estimate_constants,
    load_problem_file,
    tomllib,
    value_bounds,
)
from .solver import (
    PreconditionError,
    SolverError,
    make_grid,
    solve_finite,
    solve_infinite,
    solve_stationary,
    solve_transformed,
    write_field_csv,
)
from .verify import (
    CheckReport,
    InsufficientTraceError,
    any_failed,
    check_bounds,
    check_boundary_decay,
    check_isaacs_value,
    check_lipschitz,
    check_stationarity,
    check_truncation_rate,
    scheme_slack,
    write_reports,
)

KNOWN_KEYS = {
    "grid": {"lo", "hi", "points", "window", "boundary", "dt", "dt_cap"},
    "solver": {"tol", "horizon_step", "max_horizons", "t_max", "kind", "slack_fraction"},
    "mc": {"paths", "dt", "horizon", "t0", "x0", "u", "v", "tol"},
}

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    subcommand: str
    problem_path: Path
    out_dir: Path
    tol: float | None
    seed: int
    overrides: dict
    threads: int | None


def parse_override(text: str) -> tuple[str, str, object]:
    """``section.key=value``; the value is read as a TOML value, falling back to a bare string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    key, raw = text.split("=", 1)
    if key.count(".") != 1:
        raise ConfigError(f"override key {key!r} must be section.key")
    section, name = key.strip().split(".")
    if section not in KNOWN_KEYS or name not in KNOWN_KEYS[section]:
        raise ConfigError(f"unknown override key {key!r}")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except Exception:
        value = raw.strip()
    return section, name, value


def apply_overrides(problem: GameProblem, overrides: dict) -> GameProblem:
    if not overrides:
        return problem
    settings = {k: dict(v) for k, v in problem.settings.items()}
    for (section, name), value in overrides.items():
        settings.setdefault(section, {})[name] = value
    return dataclasses.replace(problem, settings=settings)


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("ISAACS_HORIZON_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"ISAACS_HORIZON_THREADS must be an integer, got {env!r}") from None
    return None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isaacs-horizon", description="Discounted stochastic differential games.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", required=True, help="problem file (TOML) or name of a shipped problem")
    common.add_argument("--out", default="out", help="output directory (created if absent)")
    common.add_argument("--tol", type=float, default=None, help="truncation / stopping tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    common.add_argument("--threads", type=int, default=None, help="worker cap (recorded in run metadata)")
    common.add_argument("--kind", choices=("lower", "upper"), default=None)
    p = sub.add_parser("solve-finite", parents=[common], help="finite horizon with zero terminal data")
    p.add_argument("--horizon", type=float, required=True)
    for name, text in (
        ("solve-infinite", "infinite horizon by horizon truncation"),
        ("solve-stationary", "stationary equation (autonomous problems)"),
        ("solve-transformed", "discount-transformed equation"),
        ("check-all", "solve and run every applicable check"),
        ("isaacs-scan", "largest gap between upper and lower Hamiltonians"),
        ("report-constants", "estimated constants and closed-form bounds"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    b = sub.add_parser("bsde", parents=[common], help="Monte Carlo BSDE for a constant control pair")
    b.add_argument("--x0", type=float, nargs="+", default=None)
    b.add_argument("--t0", type=float, default=None)
    b.add_argument("--paths", type=int, default=None)
    b.add_argument("--dt", type=float, default=None)
    b.add_argument("--horizon", type=float, default=None, help="fixed horizon; omit for the infinite-horizon loop")
    return parser


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _assumptions(problem: GameProblem):
    report = estimate_constants(problem)
    issues = report.diagnostics()
    fatal = [m for m in issues if not m.startswith("dissipativity")]
    if fatal:
        raise AssumptionError("; ".join(fatal))
    return report, value_bounds(report)


def _solver_opts(problem: GameProblem, cfg: RunConfig) -> dict:
    s = problem.section("solver")
    return {
        "tol": cfg.tol if cfg.tol is not None else float(s.get("tol", 1e-4)),
        "horizon_step": float(s.get("horizon_step", 1.0)),
        "max_horizons": int(s.get("max_horizons", 60)),
    }


def _run(args, cfg: RunConfig) -> int:
    problem = apply_overrides(load_problem_file(cfg.problem_path), cfg.overrides)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    kind = args.kind or problem.section("solver").get("kind", "lower")
    _write_json(
        out / "run.json",
        {
            "subcommand": cfg.subcommand,
            "problem": str(cfg.problem_path),
            "tol": cfg.tol,
            "seed": cfg.seed,
            "overrides": {f"{a}.{b}": v for (a, b), v in sorted(cfg.overrides.items())},
            "threads": cfg.threads,
            "metadata": {"timestamp": datetime.now(timezone.utc).isoformat(), "version": __version__},
        },
    )

    if cfg.subcommand == "report-constants":
        report = estimate_constants(problem, seed=cfg.seed)
        payload = {"report": report.as_dict(), "diagnostics": report.diagnostics()}
        try:
            bounds = value_bounds(report)
            payload.update(rho0=report.rho0, M1_inf=bounds.M1_inf, M2_inf=bounds.M2_inf, Lip_W=bounds.Lip_W)
        except AssumptionError:
            payload.update(rho0=report.rho0, M1_inf=None, M2_inf=None, Lip_W=None)
        _write_json(out / "constants.json", payload)
        print(json.dumps({k: payload[k] for k in ("rho0", "M1_inf", "Lip_W")}, sort_keys=True))
        if not report.rho0 > 0:
            print("assumption error: " + "; ".join(report.diagnostics()), file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    if cfg.subcommand == "isaacs-scan":
        report = estimate_constants(problem, seed=cfg.seed)
        t_max = float(problem.section("solver").get("t_max", 20.0))
        gap = isaacs_scan(problem, report.sample_box, t_max=t_max, seed=cfg.seed)
        _write_json(out / "isaacs.json", {"max_gap": gap, "seed": cfg.seed})
        print(json.dumps({"max_gap": gap}))
        return EXIT_OK

    report, bounds = _assumptions(problem)
    grid = make_grid(problem, report=report)
    opts = _solver_opts(problem, cfg)

    if cfg.subcommand == "solve-finite":
        fld = solve_finite(problem, grid, args.horizon, kind)
        write_field_csv(fld, out / "field.csv")
        return EXIT_OK
    if cfg.subcommand == "solve-infinite":
        fld, trace = solve_infinite(problem, grid, kind=kind, report=report, **opts)
        write_field_csv(fld, out / "field.csv")
        trace.to_json(out / "trace.json")
        return EXIT_OK
    if cfg.subcommand == "solve-stationary":
        fld = solve_stationary(problem, grid, tol=opts["tol"], kind=kind)
        write_field_csv(fld, out / "field.csv")
        return EXIT_OK
    if cfg.subcommand == "solve-transformed":
        fld, trace = solve_transformed(problem, grid, kind=kind, report=report, **opts)
        write_field_csv(fld, out / "field.csv")
        trace.to_json(out / "trace.json")
        _write_json(out / "transform.json", {"max_discrepancy_vs_direct": fld.metadata["max_discrepancy_vs_direct"]})
        return EXIT_OK
    if cfg.subcommand == "bsde":
        mc = problem.section("mc")
        x0 = args.x0 if args.x0 is not None else mc.get("x0", [0.0] * problem.state_dim)
        t0 = args.t0 if args.t0 is not None else float(mc.get("t0", 0.0))
        N = args.paths or int(mc.get("paths", 10_000))
        dt = args.dt or float(mc.get("dt", 0.01))
        policy = ControlPolicy.constant(problem, mc.get("u", problem.control_set_U[0]),
                                        mc.get("v", problem.control_set_V[0]))
        horizon = args.horizon if args.horizon is not None else mc.get("horizon")

        def factory(T):
            return simulate_paths(problem, policy, t0, x0, dt, T, N, cfg.seed)

        if horizon is not None:
            est = solve_bsde_truncated(factory(float(horizon)), problem, policy, float(horizon), L_y=report.L_y)
        else:
            tol = cfg.tol if cfg.tol is not None else float(mc.get("tol", 1e-3))
            est = estimate_infinite(factory, problem, policy, t0, x0, tol, report=report)
        est.to_json(out / "bsde.json")
        print(json.dumps({"y0": est.y0, "se": est.se}))
        return EXIT_OK

    # check-all
    slack = scheme_slack(bounds, float(problem.section("solver").get("slack_fraction", 0.02)))
    lower, trace = solve_infinite(problem, grid, kind="lower", report=report, **opts)
    write_field_csv(lower, out / "field.csv")
    trace.to_json(out / "trace.json")
    reports: list[CheckReport] = [check_bounds(lower, bounds), check_lipschitz(lower, bounds),
                                  check_boundary_decay(problem, lower, bounds, slack=slack)]
    try:
        reports.append(check_truncation_rate(trace, report.rho0))
    except InsufficientTraceError as exc:
        reports.append(CheckReport("truncation_rate", "Cauchy differences of truncated solutions decay at rate rho0",
                                   math.nan, math.nan, 0.0, status="skipped", details={"reason": str(exc)}))
    if problem.autonomous_flag:
        stat = solve_stationary(problem, grid, tol=opts["tol"])
        reports.append(check_stationarity(problem, lower, stat, opts["tol"], slack))
    gap = isaacs_scan(problem, report.sample_box, t_max=float(problem.section("solver").get("t_max", 20.0)),
                      seed=cfg.seed)
    upper, _ = solve_infinite(problem, grid, kind="upper", report=report, **opts)
    reports.append(check_isaacs_value(lower, upper, gap, slack))
    for r in reports:
        r.artifacts.append(str(cfg.problem_path))
    write_reports(reports, out / "reports.json")
    for r in sorted(reports, key=lambda r: r.name):
        print(f"{r.name:18s} {r.status}")
    return EXIT_CHECK_FAILED if any_failed(reports) else EXIT_OK


def _resolve_problem(name: str) -> Path:
    """A file path, or the stem of a problem shipped with the package."""
    path = Path(name)
    if not path.is_file():
        shipped = Path(__file__).resolve().parent / "problems" / f"{name}.toml"
        if shipped.is_file():
            return shipped
    return path


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        path = _resolve_problem(args.problem)
        if not path.is_file():
            raise ConfigError(f"problem file not found: {path}")
        overrides = {}
        for item in args.set:
            section, name, value = parse_override(item)
            overrides[(section, name)] = value
        cfg = RunConfig(args.subcommand, path, Path(args.out), args.tol, args.seed, overrides, _threads(args))
        return _run(args, cfg)
    except AssumptionError as exc:
        print(f"assumption error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ProblemError, DslError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, McError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
