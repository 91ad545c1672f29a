"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances are the stated ones.  A criterion that fails is left failing.
"""

import filecmp
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from prioq import analytic, records, simulator, solver
from prioq.cli import main as cli_main
from prioq.model import PriorityDistribution, SelectionProtocol

UNIFORM = PriorityDistribution.uniform()


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def _sim(protocol, L, steps=1_000_000, seed=0, dist=UNIFORM, burnin=10_000):
    t0 = time.perf_counter()
    res = simulator.run(simulator.SimulationConfig(protocol, dist, L, steps, burnin, seed))
    return res, time.perf_counter() - t0


def test_criterion_01_ergodic_mean(report):
    r2, t2 = _sim(SelectionProtocol.barabasi(0.5), 2)
    r4, t4 = _sim(SelectionProtocol.barabasi(0.9), 4)
    ok = (1.98 <= r2.mean_tau <= 2.02 and 3.9 <= r4.mean_tau <= 4.1
          and t2 < 30 and t4 < 30)
    report(1, ok, f"L=2 mean={r2.mean_tau:.5f} ({t2:.1f}s); L=4 mean={r4.mean_tau:.5f} ({t4:.1f}s)")
    assert ok


def test_criterion_02_accounting_identity(report):
    cases = [(SelectionProtocol.barabasi(0.5), 2), (SelectionProtocol.barabasi(0.9), 4),
             (SelectionProtocol.barabasi(1.0), 2), (SelectionProtocol.barabasi(0.0), 3),
             (SelectionProtocol.proportional(0.9, 0.2), 2)]
    bad = []
    for proto, L in cases:
        dist = PriorityDistribution.uniform(0.2, 1.0) if proto.name.startswith("prop") else UNIFORM
        res, _ = _sim(proto, L, steps=200_000, seed=7, dist=dist, burnin=0)
        lhs = int(res.total_waiting_time) + int(sum(res.histogram.residuals))
        if lhs != L * res.steps:
            bad.append((proto.name, L, lhs, L * res.steps))
    report(2, not bad, f"{len(cases)} runs, mismatches={bad}")
    assert not bad


@pytest.mark.parametrize("p", [0.3, 0.7])
def test_criterion_03_stationary_law(report, p):
    proto = SelectionProtocol.barabasi(p)
    res, _ = _sim(proto, 2, seed=11)
    sim = res.old_priority_samples[:1_000_000]
    mog = simulator.min_of_geometric_sampler(p, UNIFORM, np.random.default_rng(12), 1_000_000)

    def cdf(x):
        return analytic.barabasi_stationary_cdf(p, UNIFORM, np.clip(x, 0.0, 1.0))

    ks_sim = stats.kstest(sim, cdf).statistic
    ks_mog = stats.kstest(mog, cdf).statistic
    ks_pair = stats.ks_2samp(sim, mog).statistic
    resid = analytic.stationary_residual(proto, UNIFORM,
                                         analytic.BarabasiStationaryDensity(p, UNIFORM))
    ok = max(ks_sim, ks_mog, ks_pair) < 0.01 and resid < 1e-8
    report(3, ok, f"p={p}: KS sim/cf={ks_sim:.4f} mog/cf={ks_mog:.4f} sim/mog={ks_pair:.4f}"
                  f" balance residual={resid:.2e}")
    assert ok


def test_criterion_04_barabasi_pmf(report):
    notes, ok = [], True
    for p in (0.1, 0.5, 0.9, 0.999):
        err = abs(analytic.BarabasiWaitingTime(p).total(K=50) - 1.0)
        ok &= err < 1e-12
        notes.append(f"|sum-1|(p={p})={err:.1e}")
    ks = np.arange(1, 51)
    for p in (0.3, 0.5, 0.9):
        law = analytic.GeneralWaitingTime(SelectionProtocol.barabasi(p), UNIFORM,
                                          analytic.BarabasiStationaryDensity(p, UNIFORM))
        dev = np.max(np.abs(law.pmf(ks) - analytic.barabasi_tau_pmf(p, ks)))
        ok &= dev < 1e-6
        notes.append(f"quad dev(p={p})={dev:.1e}")
    for p in (0.0, 0.5, 0.9):
        res, _ = _sim(SelectionProtocol.barabasi(p), 2, seed=21)
        h = res.histogram
        n = h.total_executed
        k = np.arange(1, 21)
        emp = h.pmf(k)
        th = analytic.barabasi_tau_pmf(p, k)
        z = np.max(np.abs(emp - th) / np.sqrt(th * (1 - th) / n))
        ok &= z < 3
        notes.append(f"max|z|(p={p})={z:.2f}")
    exact = all(analytic.barabasi_tau_pmf(0.0, k) == 2.0 ** -k for k in range(1, 200))
    ok &= exact
    notes.append(f"p=0 exact={exact}")
    report(4, ok, "; ".join(notes))
    assert ok


def test_criterion_05_near_one_limit(report):
    k = np.arange(10, 101)
    scaled = (k - 1) * analytic.barabasi_tau_pmf(0.999, k)
    spread = scaled.max() / scaled.min() - 1.0
    ok = spread < 0.10
    report(5, ok, f"(k-1)pmf in [{scaled.min():.5f}, {scaled.max():.5f}], spread={spread:.3%}")
    assert ok


def test_criterion_06_operator_solver(report):
    notes, ok = [], True
    for c in (0.0, 0.2, 0.5):
        dist = PriorityDistribution.uniform(c, 1.0)
        sol = solver.solve(solver.assemble(SelectionProtocol.proportional(0.0, c), dist))
        dev = np.max(np.abs(sol.r1_raw - dist.pdf(sol.grid.nodes)))
        ok &= sol.residual < 1e-14 and dev < 1e-14
        notes.append(f"p=0,c={c}: res={sol.residual:.1e}")
    t0 = time.perf_counter()
    asm = solver.proportional_setup(0.9, 0.2, n_nodes=256)
    sol = solver.solve(asm)
    elapsed = time.perf_counter() - t0
    direct = solver.solve_direct(asm)
    gap = np.max(np.abs(sol.r1_raw - direct.r1_raw))
    res, _ = _sim(SelectionProtocol.proportional(0.9, 0.2), 2, seed=31,
                  dist=PriorityDistribution.uniform(0.2, 1.0))
    ks = stats.kstest(res.old_priority_samples, sol.cdf).statistic
    checks = [sol.hs_norm < 1, sol.residual < 1e-6, 0.999 <= sol.mass <= 1.001, ks < 0.01,
              gap <= sol.tail_bound + 1e-10, elapsed < 60]
    ok &= all(checks)
    notes.append(f"(0.9,0.2): hs={sol.hs_norm:.4f} res={sol.residual:.1e} mass={sol.mass:.9f}"
                 f" KS={ks:.4f} |neumann-direct|={gap:.1e} <= {sol.tail_bound:.1e}+1e-10"
                 f" t={elapsed:.1f}s")
    report(6, ok, "; ".join(notes))
    assert ok


def test_criterion_07_region_scan(report):
    p_grid = np.round(np.arange(1, 100) / 100, 2)
    ok, notes = True, []
    for c in (0.1, 0.2, 0.3):
        rows = solver.scan_region([c], p_grid)
        hs = np.array([r.hs_norm for r in rows])
        conv = np.array([r.converges for r in rows])
        increasing = bool(np.all(np.diff(hs) > 0))
        interval = not np.any(conv[1:] & ~conv[:-1])
        ok &= increasing and interval
        pstar = p_grid[conv].max() if conv.any() else float("nan")
        notes.append(f"c={c}: increasing={increasing} interval={interval} p*={pstar}")
    report(7, ok, "; ".join(notes))
    assert ok


def test_criterion_08_bounds_and_cutoff(report):
    ks = np.arange(2, 51)
    dist = PriorityDistribution.uniform(0.2, 1.0)
    proto = SelectionProtocol.proportional(0.9, 0.2)
    sol = solver.solve(solver.proportional_setup(0.9, 0.2))
    pmf = analytic.tau_pmf_general(proto, dist, sol.density(), ks)
    b = solver.tau_bounds(0.9, 0.2, ks, r1=sol.density())
    inside = bool(np.all((b.lower <= pmf) & (pmf <= b.upper)))

    p, c = 0.999, 0.001
    sol2 = solver.solve_auto(solver.proportional_setup(p, c))
    k0 = solver.tau_bounds(p, c, 2, r1=sol2.density()).k0
    kk = np.arange(5, int(min(50, k0 / 2)) + 1)
    pmf2 = analytic.tau_pmf_general(SelectionProtocol.proportional(p, c),
                                    PriorityDistribution.uniform(c, 1.0), sol2.density(), kk)
    slope = np.polyfit(np.log(kk), np.log(pmf2), 1)[0]
    ok = inside and -1.15 <= slope <= -0.85
    report(8, ok, f"bounds hold k=2..50: {inside}; slope at (0.999,0.001) over k=5..{kk[-1]}"
                  f" = {slope:.3f} (target [-1.15,-0.85]), k0={k0:.1f}, method={sol2.method}")
    assert ok


def test_criterion_09_records(report):
    t0 = time.perf_counter()
    law_ok = True
    for t in range(1, 7):
        law = records.indicator_law_oracle(t)
        marg = records.indicator_marginals(law)
        law_ok &= marg == [Fraction(1, i) for i in range(1, t + 1)]
        for key, pr in law.items():
            prod = math.prod(m if b else 1 - m for b, m in zip(key, marg))
            law_ok &= pr == prod
    rng = np.random.default_rng(np.random.SeedSequence(2024))
    r20 = records.asymptotic_tests(200, 20, rng, lil_k=2000)
    r30 = records.asymptotic_tests(2000, 30, rng, lil_k=2000)
    r25 = records.asymptotic_tests(2000, 25, rng, lil_k=2000)
    elapsed = time.perf_counter() - t0
    slln_ok = all(0.9 <= v <= 1.1 for v in r20.slln.values())
    ok = law_ok and slln_ok and r30.clt_ks["T"] < 0.1 and r25.ratio_ks < 0.05 and elapsed < 60
    report(9, ok, f"exact law t<=6: {law_ok}; SLLN k=20 {r20.slln}; CLT KS k=30 T="
                  f"{r30.clt_ks['T']:.4f} (delta {r30.clt_ks['delta']:.4f}, reported);"
                  f" ratio KS k=25 {r25.ratio_ks:.4f}; {elapsed:.1f}s")
    assert ok


CLI_RUNS = [
    ["simulate", "--p", "0.5", "--steps", "30000", "--seed", "1"],
    ["simulate", "--p", "0.9", "--L", "3", "--steps", "20000", "--seed", "4",
     "--replicas", "3", "--jobs", "2"],
    ["simulate", "--protocol", "proportional", "--p", "0.9", "--c", "0.2", "--steps", "20000"],
    ["solve", "--p", "0.9", "--c", "0.2", "--nodes", "128"],
    ["scan", "--c-range", "0.1:0.3:0.1", "--p-range", "0.5:0.95:0.15"],
    ["pmf", "--protocol", "barabasi", "--p", "0.999", "--kmax", "100"],
    ["pmf", "--protocol", "proportional", "--p", "0.9", "--c", "0.2", "--kmax", "30",
     "--nodes", "128"],
    ["records", "--runs", "200", "--k", "15", "--lil-k", "500", "--seed", "5"],
]


def test_criterion_10_cli_determinism(report, tmp_path):
    mismatched = []
    for i, argv in enumerate(CLI_RUNS):
        dirs = [tmp_path / f"{i}a", tmp_path / f"{i}b"]
        for d in dirs:
            assert cli_main(argv + ["--out", str(d)]) == 0
        files = sorted(os.listdir(dirs[0]))
        same = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)[0]
        if sorted(same) != files or not files:
            mismatched.append(argv[0])
    ok = not mismatched
    report(10, ok, f"{len(CLI_RUNS)} invocations rerun, differing={mismatched}")
    assert ok
