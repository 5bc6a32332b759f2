"""Config-driven experiments: universality, necessity and coupling checks.

Each experiment kind runs a fixed pipeline over an ``N_grid`` and emits
machine-checkable metric rows (``summary.csv``) plus trajectory CSVs. Rules
such as ``"pow:0.7"`` are evaluated per ``N`` (see
:func:`jsqd.policies.evaluate_rule`).
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import fluid as fl
from .diffusion import DiffusionParams, simulate_sde
from .engine import (
    InvariantViolation,
    SimConfig,
    delta_tail_check,
    replication_seed,
    run_coupled,
    run_pi_c_mode,
)
from .policies import ConfigError, Kind, PolicySpec, evaluate_rule

KINDS = (
    "fluid-universality",
    "fixed-point",
    "ordering-audit",
    "delta-bound",
    "diffusion-universality",
    "necessity",
    "batch-fluid",
    "stationary",
    "simulate",
)

CONFIG_KEYS = {
    "experiment", "N_grid", "lambda_rule", "d_rule", "n_rule", "c_rule", "ell_rule",
    "b", "T", "dt", "snapshot_dt", "replications", "seed", "burn_in", "tolerances",
}
# Extensions accepted alongside the core keys.
EXTRA_KEYS = {"policies", "init", "event_budget", "output_dir"}

_COMMON = dict(lambda_rule="frac:0.9", d_rule="N", n_rule="const:0", c_rule="const:0", ell_rule="const:1",
               b=10, T=10.0, dt=1e-3, snapshot_dt=0.1, replications=1, seed=0, burn_in=0.0)

DEFAULTS = {
    "ordering-audit": dict(N_grid=[50], n_rule="const:5", b=5, T=100.0, replications=10,
                           tolerances={"violations": 0}),
    "delta-bound": dict(N_grid=[100], n_rule="const:10", d_rule="const:20", T=10.0, replications=200,
                        tolerances={"z": 3.0}),
    "fluid-universality": dict(N_grid=[500, 2000, 8000], d_rule=["pow:0.7", "pow:0.5"],
                               tolerances={"sup_l1": 0.05}),
    "fixed-point": dict(N_grid=[2000], d_rule="pow:0.5", T=200.0, burn_in=100.0, snapshot_dt=0.5,
                        tolerances={"level1": 0.02, "level2": 0.02}),
    "stationary": dict(N_grid=[200], lambda_rule="frac:0.5", d_rule="const:1", T=2000.0, burn_in=100.0,
                       snapshot_dt=0.5, tolerances={"level": 0.02}),
    "batch-fluid": dict(N_grid=[4000], lambda_rule="frac:0.7", ell_rule="pow:0.25", d_rule="ell_over:0.25",
                        tolerances={"sup_q1": 0.05, "sup_q2": 0.02}),
    "diffusion-universality": dict(N_grid=[400, 1600, 6400], lambda_rule="hw:1", d_rule="pow:0.85", b=2,
                                   T=5.0, replications=500, tolerances={"ks_policy": 0.10, "ks_sde": 0.15}),
    "necessity": dict(N_grid=[400, 1600, 6400], lambda_rule="hw:1", d_rule="pow:0.4", b=2, T=5.0,
                      replications=500, tolerances={"growth": 1.5, "jsq_spread": 0.20}),
    "simulate": dict(N_grid=[100], tolerances={}),
}

DEFAULT_EVENT_BUDGET = 2e10


class ResourceGuardError(ConfigError):
    """Estimated event count exceeds the configured budget."""


@dataclass
class ExperimentConfig:
    experiment: str
    N_grid: list
    lambda_rule: object
    d_rule: object
    n_rule: object
    c_rule: object
    ell_rule: object
    b: int
    T: float
    dt: float
    snapshot_dt: float
    replications: int
    seed: int
    burn_in: float
    tolerances: dict
    policies: Optional[list] = None
    init: object = None
    event_budget: float = DEFAULT_EVENT_BUDGET
    output_dir: Optional[str] = None

    def lam(self, N: int) -> float:
        return evaluate_rule(self.lambda_rule, N, integer=False)

    def d_values(self, N: int) -> list[int]:
        rules = self.d_rule if isinstance(self.d_rule, list) else [self.d_rule]
        return [self._int_rule(r, N) for r in rules]

    def n(self, N: int) -> int:
        return self._int_rule(self.n_rule, N)

    def c(self, N: int) -> float:
        return evaluate_rule(self.c_rule, N, integer=False)

    def ell(self, N: int) -> int:
        return self._int_rule(self.ell_rule, N)

    def _int_rule(self, rule, N: int) -> int:
        if isinstance(rule, str) and rule.startswith("ell_over:"):
            try:
                x = float(rule.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"unparseable rule {rule!r}") from None
            return int(math.ceil(self.ell(N) / x - 1e-9))
        return evaluate_rule(rule, N, integer=True)


def parse_config(source) -> ExperimentConfig:
    """Load and validate a JSON config (path or already-parsed dict).

    Missing keys take per-experiment defaults; unknown keys, unknown kinds,
    non-positive N and rules that fail to evaluate raise ConfigError.
    """
    if isinstance(source, dict):
        raw = dict(source)
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - CONFIG_KEYS - EXTRA_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kind = raw.get("experiment")
    if kind not in KINDS:
        raise ConfigError(f"experiment: unknown kind {kind!r} (expected one of {', '.join(KINDS)})")
    merged = {**_COMMON, **DEFAULTS[kind]}
    tol = dict(merged.get("tolerances", {}))
    tol.update(raw.get("tolerances", {}) or {})
    merged.update({k: v for k, v in raw.items() if k != "tolerances"})
    merged["tolerances"] = tol
    merged.setdefault("event_budget", DEFAULT_EVENT_BUDGET)

    bad = []
    grid = merged["N_grid"]
    if not isinstance(grid, list) or not grid or any(not isinstance(N, int) or isinstance(N, bool) or N <= 0
                                                     for N in grid):
        raise ConfigError("N_grid: must be a nonempty list of positive integers")
    for key, typ in (("b", int), ("replications", int), ("seed", int)):
        if not isinstance(merged[key], int) or isinstance(merged[key], bool) or merged[key] < (0 if key == "seed" else 1):
            bad.append(key)
    for key in ("T", "dt", "snapshot_dt"):
        if not isinstance(merged[key], (int, float)) or not merged[key] > 0:
            bad.append(key)
    if not isinstance(merged["burn_in"], (int, float)) or merged["burn_in"] < 0 or merged["burn_in"] >= merged["T"]:
        bad.append("burn_in")
    if bad:
        raise ConfigError(f"invalid values for: {', '.join(bad)}")

    cfg = ExperimentConfig(**merged)
    for N in grid:
        for name, fn in (("lambda_rule", cfg.lam), ("d_rule", cfg.d_values), ("n_rule", cfg.n),
                         ("c_rule", cfg.c), ("ell_rule", cfg.ell)):
            try:
                val = fn(N)
            except ConfigError as exc:
                raise ConfigError(f"{name}: {exc}") from None
            vals = val if isinstance(val, list) else [val]
            if any(v < 0 for v in vals):
                raise ConfigError(f"{name}: negative value at N={N}")
        if cfg.lam(N) < 0:
            raise ConfigError(f"lambda_rule: negative rate at N={N}")
    if kind == "simulate":
        cfg.policies = [policy_from_dict(p, cfg, grid[0]) for p in (cfg.policies or [{"kind": "JSQ"}])]
    return cfg


def policy_from_dict(spec: dict, cfg: ExperimentConfig, N: int):
    """Policy entries keep rules unevaluated; returns the dict after a trial evaluation."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("policies: each entry needs a 'kind'")
    try:
        Kind(spec["kind"])
    except ValueError:
        raise ConfigError(f"policies: unknown kind {spec['kind']!r}") from None
    allowed = {"kind", "d", "n", "c", "ell", "with_replacement"}
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"policies: unknown fields {sorted(extra)}")
    instantiate_policy(spec, cfg, N)
    return spec


def instantiate_policy(spec: dict, cfg: ExperimentConfig, N: int) -> PolicySpec:
    kw = {"kind": spec["kind"], "with_replacement": spec.get("with_replacement", True)}
    for key in ("d", "n", "ell"):
        if key in spec:
            kw[key] = cfg._int_rule(spec[key], N)
    if "c" in spec:
        kw["c"] = evaluate_rule(spec["c"], N, integer=False)
    return PolicySpec(**kw)


# Statistics -----------------------------------------------------------------

def ks_two_sample(a, b) -> float:
    """Sup distance between the empirical CDFs of ``a`` and ``b``."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two nonempty samples")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def stationary_estimate(times, q, burn_in: float) -> np.ndarray:
    """Time average of grid snapshots ``q[k]`` taken at ``times[k] >= burn_in``."""
    times = np.asarray(times, dtype=float)
    q = np.asarray(q, dtype=float)
    if times[-1] <= burn_in:
        raise ValueError("horizon must exceed burn-in")
    return q[times >= burn_in].mean(axis=0)


# Reports --------------------------------------------------------------------

@dataclass
class MetricRow:
    experiment: str
    N: int
    policy: str
    metric: str
    value: float
    passed: Optional[bool] = None


@dataclass
class ComparisonReport:
    experiment: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    violation: Optional[str] = None

    def add(self, N, policy, metric, value, passed=None):
        self.rows.append(MetricRow(self.experiment, int(N), policy, metric, float(value),
                                   None if passed is None else bool(passed)))

    @property
    def passed(self) -> bool:
        return self.violation is None and all(r.passed is not False for r in self.rows)

    def value(self, metric: str, N: Optional[int] = None, policy: Optional[str] = None) -> float:
        for r in self.rows:
            if r.metric == metric and (N is None or r.N == N) and (policy is None or r.policy == policy):
                return r.value
        raise KeyError(metric)

    @property
    def exit_code(self) -> int:
        if self.violation is not None:
            return 3
        return 0 if self.passed else 1


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_summary(report: ComparisonReport, out_dir) -> Path:
    path = Path(out_dir) / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "N", "policy", "metric", "value", "pass"])
        for r in report.rows:
            w.writerow([r.experiment, r.N, r.policy, r.metric, fmt(r.value),
                        "NA" if r.passed is None else int(r.passed)])
    return path


def write_trajectory_csv(path, rows_by_policy, b: int):
    """``rows_by_policy``: iterable of (rep_id, policy, times, levels[S, b], loss[S])."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep_id", "policy", "t"] + [f"level_{i}" for i in range(1, b + 1)] + ["loss"])
        for rep, pol, times, levels, loss in rows_by_policy:
            for k in range(len(times)):
                w.writerow([rep, pol, fmt(times[k])] + [fmt(x) for x in levels[k]] + [fmt(loss[k])])


def write_terminal_samples(path, samples: np.ndarray, policy: Optional[str] = None):
    """Terminal-sample CSV: one row per (rep_id, coordinate)."""
    samples = np.atleast_2d(samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["rep_id", "coordinate", "value"] if policy is None else ["rep_id", "policy", "coordinate", "value"]
        w.writerow(header)
        for rep in range(samples.shape[0]):
            for i in range(samples.shape[1]):
                row = [rep, i + 1, fmt(samples[rep, i])]
                w.writerow(row if policy is None else [rep, policy] + row[1:])


def read_terminal_samples(path) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    reps = max(int(r["rep_id"]) for r in rows) + 1
    k = max(int(r["coordinate"]) for r in rows)
    out = np.zeros((reps, k))
    for r in rows:
        out[int(r["rep_id"]), int(r["coordinate"]) - 1] = float(r["value"])
    return out


# Pipelines -------------------------------------------------------------------

def estimated_events(cfg: ExperimentConfig) -> float:
    total = 0.0
    runs_per_N = 2 if cfg.experiment == "necessity" and _has_pi_c(cfg) else 1
    for N in cfg.N_grid:
        total += cfg.replications * runs_per_N * (cfg.lam(N) + N) * cfg.T
    return total


def _has_pi_c(cfg) -> bool:
    return any(cfg.c(N) > 0 for N in cfg.N_grid)


def _map(fn, items, parallel: int):
    if parallel and parallel > 1:
        with ProcessPoolExecutor(parallel) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _sim(cfg: ExperimentConfig, N: int, policies, rep: int, **kw) -> SimConfig:
    return SimConfig(N=N, lam=cfg.lam(N), b=cfg.b, T=cfg.T, seed=replication_seed(cfg.seed, rep + 1_000_003 * N),
                     policies=policies, snapshot_dt=cfg.snapshot_dt, **kw)


def _ordering_one(args):
    cfg, N, rep, audit = args
    n = cfg.n(N)
    pols = [PolicySpec(Kind.JSQ), PolicySpec(Kind.CJSQ_UNIFORM, n=n), PolicySpec(Kind.MJSQ, n=n)]
    try:
        run = run_coupled(_sim(cfg, N, pols, rep, audit=audit))
    except InvariantViolation as exc:
        return rep, None, str(exc)
    return rep, run.events, None


def _run_ordering_audit(cfg, report, parallel, out_dir):
    for N in cfg.N_grid:
        results = sorted(_map(_ordering_one, [(cfg, N, r, True) for r in range(cfg.replications)], parallel))
        violations = [msg for _, _, msg in results if msg]
        events = sum(ev or 0 for _, ev, _ in results)
        label = f"JSQ|CJSQ_UNIFORM(n={cfg.n(N)})|MJSQ(n={cfg.n(N)})"
        report.add(N, label, "events_audited", events)
        report.add(N, label, "violations", len(violations), len(violations) <= cfg.tolerances["violations"])
        if violations:
            report.violation = violations[0]


def _delta_one(args):
    cfg, N, rep = args
    d, n = cfg.d_values(N)[0], cfg.n(N)
    pols = [PolicySpec(Kind.JSQ_D, d=d), PolicySpec(Kind.JSQ_ND, n=n, d=d)]
    try:
        run = run_coupled(_sim(cfg, N, pols, rep, audit=True))
    except InvariantViolation as exc:
        return rep, 0, 0, str(exc)
    return rep, run.arrival_epochs, run.delta_final(0, 1), None


def _run_delta_bound(cfg, report, parallel, out_dir):
    for N in cfg.N_grid:
        d, n = cfg.d_values(N)[0], cfg.n(N)
        res = sorted(_map(_delta_one, [(cfg, N, r) for r in range(cfg.replications)], parallel))
        bad = [m for *_, m in res if m]
        if bad:
            report.violation = bad[0]
        A = [a for _, a, _, _ in res]
        D = [x for _, _, x, _ in res]
        rep = delta_tail_check(A, D, N, n, d)
        label = f"JSQ(d={d})|JSQ(n={n},d={d})"
        z = cfg.tolerances["z"]
        report.add(N, label, "mean_arrivals", float(np.mean(A)))
        report.add(N, label, "mean_delta", rep.mean_delta)
        report.add(N, label, "expected_delta_bound_p", rep.mean_expected)
        report.add(N, label, "z_bound_p", rep.z, abs(rep.z) <= z)
        report.add(N, label, "z_exact_window_p", rep.z_exact, abs(rep.z_exact) <= z)
        report.add(N, label, "delta_mean_le_bound", rep.mean_delta - rep.mean_expected, rep.mean_delta <= rep.mean_expected)
        report.add(N, label, "l1_violations", len(bad), not bad)
        if out_dir:
            with open(Path(out_dir) / f"delta_N{N}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["rep_id", "arrivals", "delta"])
                for r, a, x, _ in res:
                    w.writerow([r, a, x])


def fluid_sup_l1(run, p: int, ode: fl.FluidTrajectory) -> float:
    ref = ode.on_grid(run.times)
    return float(np.abs(run.fluid(p) - ref).sum(axis=1).max())


def _run_fluid_universality(cfg, report, parallel, out_dir):
    sup = {}
    for N in cfg.N_grid:
        lam = cfg.lam(N) / N
        ode = fl.integrate_fluid(np.zeros(cfg.b), lam, cfg.T, cfg.dt)
        pols = [PolicySpec(Kind.JSQ)] + [PolicySpec(Kind.JSQ_D, d=min(d, N)) for d in cfg.d_values(N)]
        run = run_coupled(_sim(cfg, N, pols, 0))
        for p, pol in enumerate(pols):
            key = "JSQ" if pol.kind is Kind.JSQ else f"JSQ_D[{cfg.d_rule[p - 1] if isinstance(cfg.d_rule, list) else cfg.d_rule}]"
            dist = fluid_sup_l1(run, p, ode)
            sup.setdefault(key, []).append(dist)
            report.add(N, pol.label, "sup_l1_to_ode", dist,
                       dist <= cfg.tolerances["sup_l1"] if N == cfg.N_grid[-1] else None)
            report.add(N, pol.label, "max_level_b", run.qmax[p, -1], run.qmax[p, -1] == 0)
        report.add(N, "fluid-ode", "projection_magnitude", ode.projection)
        if out_dir:
            rows = [(0, "fluid-ode", run.times, ode.on_grid(run.times), np.zeros(len(run.times)))]
            rows += [(0, pol.label, run.times, run.fluid(p), run.L[:, p] / N) for p, pol in enumerate(pols)]
            write_trajectory_csv(Path(out_dir) / f"fluid_N{N}.csv", rows, cfg.b)
    for key, vals in sup.items():
        mono = all(b < a for a, b in zip(vals, vals[1:]))
        report.add(cfg.N_grid[-1], key, "sup_l1_monotone_in_N", float(mono), mono)


def _run_fixed_point(cfg, report, parallel, out_dir):
    for N in cfg.N_grid:
        lam = cfg.lam(N) / N
        star = fl.fixed_point(lam, cfg.b)
        for d in cfg.d_values(N):
            pol = PolicySpec(Kind.JSQ_D, d=min(d, N)) if d < N else PolicySpec(Kind.JSQ)
            run = run_coupled(_sim(cfg, N, [pol], 0))
            est = stationary_estimate(run.times, run.fluid(0), cfg.burn_in)
            report.add(N, pol.label, "level1", est[0], abs(est[0] - star[0]) <= cfg.tolerances["level1"])
            report.add(N, pol.label, "level2", est[1] if cfg.b > 1 else 0.0,
                       (est[1] if cfg.b > 1 else 0.0) <= cfg.tolerances["level2"])
            report.add(N, pol.label, "level_b", est[-1])
            if out_dir:
                write_trajectory_csv(Path(out_dir) / f"fixed_point_N{N}_d{d}.csv",
                                     [(0, pol.label, run.times, run.Q[:, 0, :], run.L[:, 0])], cfg.b)


def _run_stationary(cfg, report, parallel, out_dir):
    for N in cfg.N_grid:
        lam = cfg.lam(N) / N
        for d in cfg.d_values(N):
            pol = PolicySpec(Kind.JSQ_D, d=d)
            run = run_coupled(_sim(cfg, N, [pol], 0))
            est = stationary_estimate(run.times, run.fluid(0), cfg.burn_in)
            if d == 1:
                ref = lam ** np.arange(1, cfg.b + 1)
                name = "geometric"
            else:
                ref = fl.fixed_point(lam, cfg.b)
                name = "fixed_point"
            for i in range(min(3, cfg.b)):
                report.add(N, pol.label, f"level{i + 1}_vs_{name}", est[i] - ref[i],
                           abs(est[i] - ref[i]) <= cfg.tolerances["level"])


def _run_batch_fluid(cfg, report, parallel, out_dir):
    for N in cfg.N_grid:
        lam = cfg.lam(N) / N
        ell = cfg.ell(N)
        d = min(cfg.d_values(N)[0], N)
        pol = PolicySpec(Kind.BATCH_JSQ_D, d=d, ell=ell, with_replacement=False)
        run = run_coupled(_sim(cfg, N, [pol], 0, batch_ell=ell))
        closed = fl.batch_fluid_closed_form(0.0, lam, run.times, cfg.b)
        q = run.fluid(0)
        e1 = float(np.abs(q[:, 0] - closed[:, 0]).max())
        e2 = float(q[:, 1].max()) if cfg.b > 1 else 0.0
        report.add(N, pol.label, "sup_q1_error", e1, e1 <= cfg.tolerances["sup_q1"])
        report.add(N, pol.label, "sup_q2", e2, e2 <= cfg.tolerances["sup_q2"])
        if out_dir:
            rows = [(0, "batch-closed-form", run.times, closed, np.zeros(len(run.times))),
                    (0, pol.label, run.times, q, run.L[:, 0] / N)]
            write_trajectory_csv(Path(out_dir) / f"batch_N{N}.csv", rows, cfg.b)


def _diffusion_one(args):
    cfg, N, rep, d = args
    pols = [PolicySpec(Kind.JSQ), PolicySpec(Kind.JSQ_D, d=min(d, N))]
    run = run_coupled(_sim(cfg, N, pols, rep, init="all_busy"))
    root = math.sqrt(N)
    final = np.array([[-(N - s.Q[0]) / root, s.Q[1] / root] for s in run.final_states])
    sup2 = run.qmax[:, 1] / root
    return rep, final, sup2


def coupled_diffusion_samples(cfg: ExperimentConfig, N: int, parallel: int = 1):
    """Terminal (X1, X2) and sup X2 for coupled (JSQ, JSQ(d)) over all replications.

    Returns arrays of shape (reps, 2 policies, 2) and (reps, 2 policies).
    """
    d = cfg.d_values(N)[0]
    res = sorted(_map(_diffusion_one, [(cfg, N, r, d) for r in range(cfg.replications)], parallel),
                 key=lambda x: x[0])
    final = np.stack([r[1] for r in res])
    sup2 = np.stack([r[2] for r in res])
    return final, sup2


def _beta(cfg, N) -> float:
    return (N - cfg.lam(N)) / math.sqrt(N)


def _run_diffusion_universality(cfg, report, parallel, out_dir):
    ks = []
    finals = {}
    for N in cfg.N_grid:
        final, _ = coupled_diffusion_samples(cfg, N, parallel)
        finals[N] = final
        dist = ks_two_sample(final[:, 1, 1], final[:, 0, 1])
        ks.append(dist)
        d = cfg.d_values(N)[0]
        report.add(N, f"JSQ(d={d})|JSQ", "ks_terminal_Q2",
                   dist, dist <= cfg.tolerances["ks_policy"] if N == cfg.N_grid[-1] else None)
        if out_dir:
            write_terminal_samples(Path(out_dir) / f"terminal_N{N}_JSQ.csv", final[:, 0, :])
            write_terminal_samples(Path(out_dir) / f"terminal_N{N}_JSQd.csv", final[:, 1, :])
    mono = all(b <= a for a, b in zip(ks, ks[1:]))
    report.add(cfg.N_grid[-1], "JSQ(d)|JSQ", "ks_nonincreasing_in_N", float(mono), mono)

    Nmax = cfg.N_grid[-1]
    params = DiffusionParams(beta=_beta(cfg, Nmax), k=2, T=cfg.T, h=cfg.dt,
                             seed=replication_seed(cfg.seed, 7_777_777))
    sde = simulate_sde(params, cfg.replications)
    dist = ks_two_sample(finals[Nmax][:, 0, 1], sde.X[:, 1])
    report.add(Nmax, "JSQ|sde", "ks_terminal_Q2", dist, dist <= cfg.tolerances["ks_sde"])
    report.add(Nmax, "JSQ|sde", "ks_terminal_Q1", ks_two_sample(finals[Nmax][:, 0, 0], sde.X[:, 0]))
    if out_dir:
        write_terminal_samples(Path(out_dir) / "terminal_sde.csv", sde.X)


def _pi_c_one(args):
    cfg, N, rep, d, c = args
    pols = [PolicySpec(Kind.PI_C, c=c, d=d), PolicySpec(Kind.JSQ_D, d=d)]
    run = run_pi_c_mode(_sim(cfg, N, pols, rep + 500_009, init="all_busy"))
    root = math.sqrt(N)
    lower_bound_held = bool(np.all(run.Q[:, 1, 1] >= run.Q[:, 0, 1]))
    return rep, run.qmax[0, 1] / root, lower_bound_held, int(run.fallback[0])


def _run_necessity(cfg, report, parallel, out_dir):
    med_d, med_jsq = [], []
    for N in cfg.N_grid:
        d = cfg.d_values(N)[0]
        _, sup2 = coupled_diffusion_samples(cfg, N, parallel)
        md, mj = float(np.median(sup2[:, 1])), float(np.median(sup2[:, 0]))
        med_d.append(md)
        med_jsq.append(mj)
        report.add(N, f"JSQ(d={d})", "median_sup_Q2", md)
        report.add(N, "JSQ", "median_sup_Q2", mj)
        c = cfg.c(N)
        if c > 0:
            res = _map(_pi_c_one, [(cfg, N, r, d, c) for r in range(cfg.replications)], parallel)
            report.add(N, f"PI(c={c:.6g},d={d})", "median_sup_Q2", float(np.median([r[1] for r in res])))
            report.add(N, f"PI(c={c:.6g},d={d})", "frac_paths_dominated_by_JSQ(d)",
                       float(np.mean([r[2] for r in res])))
            report.add(N, f"PI(c={c:.6g},d={d})", "fallback_count", float(sum(r[3] for r in res)))
        if out_dir:
            with open(Path(out_dir) / f"sup_Q2_N{N}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["rep_id", "policy", "sup_Q2"])
                for r in range(sup2.shape[0]):
                    w.writerow([r, "JSQ", fmt(sup2[r, 0])])
                    w.writerow([r, f"JSQ(d={d})", fmt(sup2[r, 1])])
    growth = med_d[-1] / med_d[0]
    spread = max(med_jsq) / min(med_jsq) - 1.0
    mono = all(b > a for a, b in zip(med_d, med_d[1:]))
    report.add(cfg.N_grid[-1], "JSQ(d)", "median_sup_Q2_growth", growth, growth >= cfg.tolerances["growth"])
    report.add(cfg.N_grid[-1], "JSQ(d)", "median_sup_Q2_monotone", float(mono), mono)
    report.add(cfg.N_grid[-1], "JSQ", "median_sup_Q2_spread", spread, spread < cfg.tolerances["jsq_spread"])


def _run_simulate(cfg, report, parallel, out_dir, audit=False):
    for N in cfg.N_grid:
        pols = [instantiate_policy(p, cfg, N) for p in cfg.policies]
        init = cfg.init or "empty"
        rows = []
        for rep in range(cfg.replications):
            try:
                run = run_coupled(_sim(cfg, N, pols, rep, init=init, audit=audit))
            except InvariantViolation as exc:
                report.violation = str(exc)
                return
            for p, pol in enumerate(pols):
                report.add(N, pol.label, f"rep{rep}_final_total_tasks", sum(run.final_states[p].Q))
                report.add(N, pol.label, f"rep{rep}_loss", run.final_states[p].L)
            for p in range(len(pols)):
                for q in range(p + 1, len(pols)):
                    report.add(N, f"{pols[p].label}|{pols[q].label}", f"rep{rep}_delta", run.delta_final(p, q))
            rows += [(rep, pol.label, run.times, run.Q[:, p, :], run.L[:, p]) for p, pol in enumerate(pols)]
        if out_dir:
            write_trajectory_csv(Path(out_dir) / f"trajectory_N{N}.csv", rows, cfg.b)


_PIPELINES = {
    "ordering-audit": _run_ordering_audit,
    "delta-bound": _run_delta_bound,
    "fluid-universality": _run_fluid_universality,
    "fixed-point": _run_fixed_point,
    "stationary": _run_stationary,
    "batch-fluid": _run_batch_fluid,
    "diffusion-universality": _run_diffusion_universality,
    "necessity": _run_necessity,
    "simulate": _run_simulate,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, parallel: int = 1, audit: bool = False) -> ComparisonReport:
    """Run the pipeline for ``cfg.experiment`` and write CSVs into ``out_dir``."""
    est = estimated_events(cfg)
    if est > cfg.event_budget:
        raise ResourceGuardError(
            f"estimated {est:.3g} events exceeds budget {cfg.event_budget:.3g}; "
            f"reduce N_grid, T or replications, or raise event_budget")
    out_dir = out_dir or cfg.output_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    report = ComparisonReport(cfg.experiment)
    start = time.perf_counter()
    if cfg.experiment == "simulate":
        _run_simulate(cfg, report, parallel, out_dir, audit=audit)
    else:
        _PIPELINES[cfg.experiment](cfg, report, parallel, out_dir)
    report.metadata = {"seconds": time.perf_counter() - start, "estimated_events": est}
    if out_dir:
        write_summary(report, out_dir)
        if report.violation:
            (Path(out_dir) / "audit.log").write_text(report.violation + "\n")
        else:
            (Path(out_dir) / "audit.log").write_text("")
    return report

