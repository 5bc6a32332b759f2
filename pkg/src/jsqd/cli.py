"""Command line entry point: ``jsqd {simulate,fluid,diffusion,experiment}``.

Exit codes: 0 all tolerances pass, 1 a tolerance failed, 2 configuration
error, 3 invariant violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import fluid as fl
from .diffusion import DiffusionParams, complementarity_audit, simulate_sde
from .engine import InvariantViolation, snapshot_grid
from .experiments import (
    ComparisonReport,
    parse_config,
    run_experiment,
    write_summary,
    write_terminal_samples,
    write_trajectory_csv,
)
from .policies import ConfigError

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2, 3

log = logging.getLogger("jsqd")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jsqd", description="Power-of-d load balancing simulator and limit solvers.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "coupled stochastic simulation"),
                        ("fluid", "integrate the fluid ODE"),
                        ("diffusion", "simulate the reflected diffusion"),
                        ("experiment", "run a configured experiment pipeline")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--replications", type=int, help="override the replication count")
        p.add_argument("--parallel", type=int, default=1, help="worker processes for replications")
        p.add_argument("--audit", action="store_true", help="check coupling invariants at every event")
    return ap


def _load(args):
    cfg = parse_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.replications is not None:
        if args.replications < 1:
            raise ConfigError("--replications must be positive")
        over["replications"] = args.replications
    return dataclasses.replace(cfg, **over) if over else cfg


def _fluid(cfg, out: Path) -> ComparisonReport:
    N = cfg.N_grid[-1]
    lam = cfg.lam(N) / N
    if isinstance(cfg.init, list):
        q0 = np.asarray(cfg.init, dtype=float)
        if q0.shape != (cfg.b,):
            raise ConfigError("init must list b fluid levels")
    elif cfg.init in (None, "empty"):
        q0 = np.zeros(cfg.b)
    elif cfg.init == "all_busy":
        q0 = np.zeros(cfg.b)
        q0[0] = 1.0
    else:
        raise ConfigError(f"unknown init {cfg.init!r}")
    try:
        tr = fl.integrate_fluid(q0, lam, cfg.T, cfg.dt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    grid = snapshot_grid(cfg.T, cfg.snapshot_dt)
    write_trajectory_csv(out / "fluid.csv", [(0, "fluid-ode", grid, tr.on_grid(grid), np.zeros(len(grid)))], cfg.b)
    rep = ComparisonReport("fluid")
    rep.add(N, "fluid-ode", "projection_magnitude", tr.projection, tr.projection <= fl.PROJECTION_WARN)
    for i, v in enumerate(tr.q[-1]):
        rep.add(N, "fluid-ode", f"final_level{i + 1}", v)
    return rep


def _diffusion(cfg, out: Path, audit: bool) -> ComparisonReport:
    N = cfg.N_grid[-1]
    beta = (N - cfg.lam(N)) / math.sqrt(N)
    try:
        params = DiffusionParams(beta=beta, k=max(cfg.b, 2), T=cfg.T, h=cfg.dt, seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    s = simulate_sde(params, cfg.replications, record_paths=audit)
    write_terminal_samples(out / "terminal_sde.csv", s.X)
    rep = ComparisonReport("diffusion")
    for i in range(params.k):
        rep.add(N, "sde", f"mean_X{i + 1}", s.X[:, i].mean())
    if audit:
        res = complementarity_audit(s.dU, s.X1_after)
        rep.add(N, "sde", "complementarity_ok", float(res.ok), res.ok)
        if not res.ok:
            rep.violation = f"complementarity violated at step {res.step}, rep {res.rep}: {res.detail}"
    return rep


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = _load(args)
        if args.command == "simulate" and cfg.experiment != "simulate":
            raise ConfigError("simulate needs a config with experiment = 'simulate'")
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("simulate", "experiment"):
            report = run_experiment(cfg, out_dir=out, parallel=args.parallel, audit=args.audit)
        elif args.command == "fluid":
            report = _fluid(cfg, out)
            write_summary(report, out)
        else:
            report = _diffusion(cfg, out, args.audit)
            write_summary(report, out)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_VIOLATION
    if report.violation:
        log.error("invariant violation: %s", report.violation)
    for r in report.rows:
        if r.passed is False:
            log.warning("FAIL %s N=%d %s %s=%.6g", r.experiment, r.N, r.policy, r.metric, r.value)
    log.info("%s: %s (summary in %s)", report.experiment, "pass" if report.passed else "fail", out / "summary.csv")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
