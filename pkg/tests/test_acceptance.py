"""Acceptance criteria 1-9 on the default benchmark configuration.

Each test records one ``PASS``/``FAIL criterion k`` line; the lines are
repeated in the terminal summary (see conftest.py).
"""

import math
import time

import numpy as np
import pytest

from horizon_mpc import benchmark
from horizon_mpc.ocp import bellman_residual
from horizon_mpc.qp import QpProblem, Status, solve_qp
from horizon_mpc.sim import sweep
from horizon_mpc.subopt import alpha_of, applicability, min_stabilizing_horizon
from oracles import enumerate_active_sets

RESULTS: list[str] = []


def verdict(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def full_row():
    """N = 20 with every constraint horizon 1..19 (covers the 8..19 range)."""
    t0 = time.perf_counter()
    res = sweep(benchmark.benchmark_spec(), [20], list(range(1, 20)), benchmark.X0)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def table_sweep():
    return sweep(benchmark.benchmark_spec(), [6, 13, 20], [1, 3, 5, 7, 9], benchmark.X0)


def test_criterion_1_qp_oracle():
    rng = np.random.default_rng(20241014)
    t0 = time.perf_counter()
    worst, bad, n = 0.0, 0, 600
    for _ in range(n):
        d, q = int(rng.integers(1, 7)), int(rng.integers(0, 11))
        M = rng.normal(size=(d, d))
        H = M @ M.T + 0.1 * np.eye(d)
        g = 3 * rng.normal(size=d)
        G, h = rng.normal(size=(q, d)), rng.normal(size=q)
        ref, _ = enumerate_active_sets(H, g, G, h)
        sol = solve_qp(QpProblem(H, g, G, h))
        if (ref is None) != (sol.status is Status.INFEASIBLE) or (ref is not None and not sol.optimal):
            bad += 1
        elif ref is not None:
            err = abs(sol.value - ref)
            worst = max(worst, err)
            bad += err > 1e-6
    elapsed = time.perf_counter() - t0
    verdict(1, bad == 0 and elapsed <= 60,
            f"{n} QPs, {bad} mismatches, max |value error| {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_bellman(bench_run):
    spec, run = bench_run
    tables = run.tables
    idx = np.unique(np.linspace(0, len(tables) - 1, max(20, min(len(tables), 25))).astype(int))
    worst = max(bellman_residual(spec, tables[k].x, n, table=tables[k])
                for k in idx for n in range(1, spec.N + 1))
    verdict(2, len(idx) >= 20 and worst <= 1e-5,
            f"{len(idx)} states x {spec.N} horizons, max residual {worst:.2e}")


def test_criterion_3_cost_bound(full_row):
    res, elapsed = full_row
    gaps = []
    for K in range(8, 20):
        r = res.cell(20, K).report
        if r is not None and r.applicable:
            gaps.append(r.V0 + 1e-6 - r.alpha * r.J)
    ok = bool(gaps) and min(gaps) >= 0 and elapsed <= 600
    verdict(3, ok, f"{len(gaps)}/12 applicable cells, min slack V0 - alpha*J = "
                   f"{min(gaps) if gaps else math.nan:.4g}, sweep {elapsed:.1f}s")


def test_criterion_4_applicability_split(full_row):
    res, _ = full_row
    flags = {K: res.cell(20, K).report.applicable for K in range(1, 20)}
    true_ks = [K for K, f in flags.items() if f]
    cut = min(true_ks) if true_ks else None
    clean = cut is not None and cut > 1 and all(flags[K] == (K >= cut) for K in flags)
    verdict(4, clean, f"applicable=false for N-Ntilde < {cut}, true for {cut}..19 "
                      f"(reference split at 8)")


def test_criterion_5_eta_chain(bench_run, full_row):
    _, run = bench_run
    margins = list(run.report.eta_chain_min)
    res, _ = full_row
    for cell in res.cells.values():
        if cell.report is not None:
            margins += cell.report.eta_chain_min
    verdict(5, min(margins) >= -1e-6, f"{len(margins)} certified steps, min margin {min(margins):.3g}")


def test_criterion_6_safety(full_row, table_sweep):
    res, _ = full_row
    cells = list(res.cells.values()) + list(table_sweep.cells.values())
    done = [c for c in cells if c.status != "na"]
    failures = [(c.N, c.constraint_horizon) for c in done
                if not (c.ok and c.terminated == "converged" and c.safe and c.decay_ok)]
    verdict(6, not failures, f"{len(done)} cells completed safely, failures {failures}")


def test_criterion_7_cost_trend(table_sweep):
    res = table_sweep
    rows_ok = all(res.row_nonincreasing(N, 1e-6) for N in (6, 13, 20))
    cols_ok = all(res.column_nonincreasing(K, 1e-6) for K in (1, 3, 5, 7, 9))
    na = [(N, K) for (N, K), c in res.cells.items() if c.status == "na"]
    Js = {N: res.cell(N, 1).J for N in (6, 13, 20)}
    verdict(7, rows_ok and cols_ok and sorted(na) == [(6, 7), (6, 9)],
            f"rows {rows_ok}, columns {cols_ok}, N.A. {sorted(na)}, "
            f"J(N, 1) = {', '.join(f'{N}:{J:.6f}' for N, J in Js.items())}")


def test_criterion_8_alpha_identities():
    t0 = time.perf_counter()
    exact = alpha_of(1.0, 5, 3) == 0.5 and alpha_of(1.0, 12, 10) == 0.5
    mono = True
    for beta in (0.5, 1.0, 2.0, 5.0):
        a = [alpha_of(beta, K + 1, 1) for K in range(1, 400)]
        mono &= all(y >= x for x, y in zip(a, a[1:])) and abs(a[-1] - 1) < 1e-6
    grid = [(b, K) for b in np.linspace(0.05, 10, 10) for K in range(1, 11)]
    consistent = all(applicability(b, K + 2, 2) == (alpha_of(b, K + 2, 2) > 0) for b, K in grid)
    elapsed = time.perf_counter() - t0
    verdict(8, exact and mono and consistent and len(grid) == 100 and elapsed < 1,
            f"alpha(1, K=2)=0.5 {exact}, monotone to 1 {mono}, iff on 100 points {consistent}, "
            f"{elapsed * 1e3:.1f}ms")


def _ratio(beta):
    lb1, lb = math.log1p(beta), math.log(beta)
    return (lb1 + lb) / (lb1 - lb)


def test_criterion_9_stability_horizon():
    base = all(min_stabilizing_horizon(1.0, nt) == nt + 1 for nt in range(1, 11))
    betas = [1e-3, 0.1, 0.5, 0.9, 1.0, 1.2, 1.5, 2.0, 2.63, 3.0, 5.0, 10.0]
    upper, lower, boundary, bad = 0, 0, [], []
    for beta in betas:
        for nt in range(1, 11):
            Ns = min_stabilizing_horizon(beta, nt)
            r = _ratio(beta)
            if r > 0 and abs(r - round(r)) < 1e-12:
                # N* - Ntilde equals the ratio exactly: alpha(N*) = 0, the
                # equality boundary of the strict inequality
                boundary.append((beta, nt))
            else:
                upper += 1
                if not applicability(beta, Ns, nt):
                    bad.append(("N*", beta, nt, Ns))
            if Ns - 1 >= nt + 1:
                lower += 1
                if applicability(beta, Ns - 1, nt):
                    bad.append(("N*-1", beta, nt, Ns))
    verdict(9, base and not bad and lower > 0,
            f"N*(1, Ntilde) = Ntilde+1 {base}; applicable at N* on {upper} pairs, "
            f"not at N*-1 on {lower} pairs, {len(boundary)} equality-boundary pairs (beta=1), "
            f"failures {bad}")
