"""Acceptance gate: the ten primary criteria at their stated tolerances.

Each test prints one PASS/FAIL line (also repeated in the terminal summary).
"""
import itertools
import time
from fractions import Fraction

import numpy as np

from jsqd.diffusion import DiffusionParams, complementarity_audit, linear_ode_solution, simulate_sde
from jsqd.engine import InvariantViolation, SimConfig, delta_tail_check, replication_seed, run_coupled
from jsqd.experiments import parse_config, run_experiment
from jsqd.occupancy import OccupancyState, rank_queue_len
from jsqd.policies import Kind, PolicySpec, decide_jsq_d, decide_jsq_d_cdf

import conftest
from oracles import all_states


def report(capsys, k, ok, detail):
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES[k] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def rows(rep):
    return "; ".join(f"N={r.N} {r.policy} {r.metric}={r.value:.4g}" for r in rep.rows if r.passed is not None)


def test_criterion_01_ordering_audit(capsys):
    start = time.perf_counter()
    pols = (PolicySpec(Kind.JSQ), PolicySpec(Kind.CJSQ_UNIFORM, n=5), PolicySpec(Kind.MJSQ, n=5))
    violations, events = [], []
    for seed in range(10):
        cfg = SimConfig(N=50, lam=45.0, b=5, T=100.0, seed=seed, policies=pols, audit=True)
        try:
            events.append(run_coupled(cfg).events)
        except InvariantViolation as exc:
            violations.append(str(exc))
    elapsed = time.perf_counter() - start
    ok = not violations and elapsed < 10
    report(capsys, 1, ok, f"violations={len(violations)} events/seed~{np.mean(events):.0f} time={elapsed:.2f}s")


def test_criterion_02_l1_delta_bound(capsys):
    start = time.perf_counter()
    pols = (PolicySpec(Kind.JSQ_D, d=3), PolicySpec(Kind.JSQ))
    violations, deltas = [], []
    for seed in range(10):
        cfg = SimConfig(N=50, lam=45.0, b=10, T=50.0, seed=seed, policies=pols, audit=True)
        try:
            deltas.append(run_coupled(cfg).delta_final(0, 1))
        except InvariantViolation as exc:
            violations.append(str(exc))
    elapsed = time.perf_counter() - start
    ok = not violations and elapsed < 5
    report(capsys, 2, ok, f"violations={len(violations)} mean Delta(T)={np.mean(deltas) if deltas else 0:.1f} "
                          f"time={elapsed:.2f}s")


def test_criterion_03_delta_law(capsys):
    start = time.perf_counter()
    N, n, d = 100, 10, 20
    pols = (PolicySpec(Kind.JSQ_D, d=d), PolicySpec(Kind.JSQ_ND, n=n, d=d))
    A, D = [], []
    for rep in range(200):
        run = run_coupled(SimConfig(N=N, lam=90.0, b=10, T=10.0, seed=replication_seed(2024, rep), policies=pols))
        A.append(run.arrival_epochs)
        D.append(run.delta_final(0, 1))
    r = delta_tail_check(A, D, N, n, d)
    elapsed = time.perf_counter() - start
    ok = abs(r.z) <= 3 and elapsed < 30
    report(capsys, 3, ok, f"mean Delta={r.mean_delta:.2f} vs A*(0.9)^20={r.mean_expected:.2f} z={r.z:.2f} "
                          f"(against the n+1 window law: z={r.z_exact:.2f}) time={elapsed:.1f}s")


def test_criterion_04_fluid_universality(capsys):
    start = time.perf_counter()
    rep = run_experiment(parse_config({"experiment": "fluid-universality"}))
    elapsed = time.perf_counter() - start
    sups = {r.policy: r.value for r in rep.rows if r.metric == "sup_l1_to_ode" and r.N == 8000}
    ok = rep.passed and elapsed < 180
    report(capsys, 4, ok, "sup l1 at N=8000: " + ", ".join(f"{k}={v:.4f}" for k, v in sups.items())
           + f"; monotone in N and Q[b]=0 checked; time={elapsed:.1f}s")


def test_criterion_05_fixed_point(capsys):
    start = time.perf_counter()
    rep = run_experiment(parse_config({"experiment": "fixed-point"}))
    elapsed = time.perf_counter() - start
    ok = rep.passed and elapsed < 60
    report(capsys, 5, ok, f"level1={rep.value('level1'):.4f} level2={rep.value('level2'):.4f} time={elapsed:.1f}s")


def test_criterion_06_batch_fluid(capsys):
    start = time.perf_counter()
    rep = run_experiment(parse_config({"experiment": "batch-fluid"}))
    elapsed = time.perf_counter() - start
    ok = rep.passed and elapsed < 60
    report(capsys, 6, ok, f"sup|q1-closed form|={rep.value('sup_q1_error'):.4f} (tol 0.05) "
                          f"sup q2={rep.value('sup_q2'):.4f} (tol 0.02) time={elapsed:.1f}s")


def test_criterion_07_diffusion_universality(capsys):
    start = time.perf_counter()
    rep = run_experiment(parse_config({"experiment": "diffusion-universality"}))
    elapsed = time.perf_counter() - start
    ok = rep.passed and elapsed < 600
    ks = [r.value for r in rep.rows if r.metric == "ks_terminal_Q2" and "sde" not in r.policy]
    report(capsys, 7, ok, f"KS(JSQ(d),JSQ) over N grid={[round(x, 3) for x in ks]} "
                          f"KS(JSQ,SDE)={rep.value('ks_terminal_Q2', policy='JSQ|sde'):.3f} time={elapsed:.1f}s")


def test_criterion_08_necessity(capsys):
    start = time.perf_counter()
    rep = run_experiment(parse_config({"experiment": "necessity"}))
    elapsed = time.perf_counter() - start
    ok = rep.passed and elapsed < 600
    report(capsys, 8, ok, f"growth={rep.value('median_sup_Q2_growth'):.2f} (>=1.5) "
                          f"JSQ spread={rep.value('median_sup_Q2_spread'):.3f} (<0.20) time={elapsed:.1f}s")


def _cdf_law(s, d):
    cuts = sorted({Fraction(0), Fraction(1)} | {Fraction(q, s.N) ** d for q in s.Q})
    law = {}
    for lo, hi in zip(cuts, cuts[1:]):
        if hi > lo:
            L = decide_jsq_d_cdf(s, d, float((lo + hi) / 2))
            law[L] = law.get(L, 0) + (hi - lo)
    return law


def test_criterion_09_policy_law_oracle(capsys):
    start = time.perf_counter()
    mismatches = checked = 0
    for N in range(1, 7):
        for b in range(1, 4):
            for d in range(1, 4):
                for Q in all_states(N, b):
                    s = OccupancyState(N, b, Q)
                    law = {}
                    w = Fraction(1, N ** d)
                    for ranks in itertools.product(range(1, N + 1), repeat=d):
                        L = rank_queue_len(s, decide_jsq_d(s, d, ranks))
                        law[L] = law.get(L, 0) + w
                    checked += 1
                    mismatches += law != _cdf_law(s, d)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 5
    report(capsys, 9, ok, f"states checked={checked} mismatches={mismatches} time={elapsed:.2f}s")


def test_criterion_10_sde_integrity(capsys):
    start = time.perf_counter()
    s = simulate_sde(DiffusionParams(beta=1.0, k=2, T=5.0, h=1e-3, seed=1), 100, record_paths=True)
    audit = complementarity_audit(s.dU, s.X1_after)
    errs = []
    for h in (2e-3, 1e-3):
        z = simulate_sde(DiffusionParams(beta=1.0, k=2, T=5.0, h=h), 1, x0=[-1.0, 1.0], noise=False, record_paths=True)
        x, y = linear_ode_solution(1.0, -1.0, 1.0, z.times)
        errs.append(max(np.abs(z.paths[:, 0, 0] - x).max(), np.abs(z.paths[:, 0, 1] - y).max()))
    factor = errs[0] / errs[1]
    elapsed = time.perf_counter() - start
    ok = audit.ok and errs[1] <= 10 * 1e-3 and factor >= 1.8 and elapsed < 10
    report(capsys, 10, ok, f"audit ok={audit.ok} zero-noise sup err={errs[1]:.2e} (<= 1e-2) "
                           f"halving factor={factor:.2f} time={elapsed:.2f}s")
