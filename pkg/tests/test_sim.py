import numpy as np
import pytest

from horizon_mpc import benchmark
from horizon_mpc.cbf import AffineBarrier, BarrierSet
from horizon_mpc.lti import DiscreteLTI, StageCost
from horizon_mpc.ocp import OcpSpec
from horizon_mpc.sim import Termination, invariance_of, run_cell, run_closed_loop, sweep
from oracles import ScalarDP


def scalar_spec(**kw):
    base = dict(sys=DiscreteLTI([[1.0]], [[1.0]]), cost=StageCost([[1.0]], [[1.0]]),
                N=2, Ntilde=1, u_min=[-10.0], u_max=[10.0])
    base.update(kw)
    return OcpSpec(**base)


def test_origin_converges_immediately():
    run = run_closed_loop(benchmark.benchmark_spec(N=6, Ntilde=2), np.zeros(4))
    assert run.terminated is Termination.CONVERGED
    assert run.T == 0 and run.J == 0.0
    assert run.states.shape == (1, 4)


def test_scalar_closed_loop_matches_dp():
    run = run_closed_loop(scalar_spec(), [1.0])
    assert run.terminated is Termination.CONVERGED
    ref = ScalarDP().closed_loop_cost(1.0, 2, 1)
    assert run.J == pytest.approx(ref, abs=1e-3)
    assert run.J == pytest.approx(5.0 / 3.0, abs=1e-6)


def test_max_steps_reported():
    run = run_closed_loop(scalar_spec(), [1.0], max_steps=3)
    assert run.terminated is Termination.MAX_STEPS
    assert run.T == 3 and run.states.shape == (4, 1)
    assert run.values.shape == (4,)


def test_infeasible_run_is_reported():
    spec = OcpSpec(
        sys=DiscreteLTI([[2.0]], [[1.0]]), cost=StageCost([[1.0]], [[1.0]]), N=3, Ntilde=1,
        u_min=[-0.1], u_max=[0.1], barriers=BarrierSet([AffineBarrier([-1.0], 1.0, 0.5)]),
    )
    run = run_closed_loop(spec, [0.5], certify_run=True)
    assert run.terminated is Termination.INFEASIBLE
    assert run.failure is not None
    assert run.report is None
    # the failing state is the last recorded one
    assert run.failure.x0 == pytest.approx(run.states[-1])


def test_benchmark_single_constrained_step_is_safe():
    spec = benchmark.benchmark_spec(N=20, Ntilde=19)
    run = run_closed_loop(spec, benchmark.X0)
    assert run.terminated is Termination.CONVERGED
    inv = invariance_of(spec, run)
    assert inv.passed and inv.decay_ok
    assert run.values.size == run.T + 1


def test_certified_run_records_every_state(bench_run):
    _, run = bench_run
    assert len(run.tables) == run.states.shape[0]
    assert run.report.samples == len(run.tables)
    assert run.report.J == pytest.approx(run.J)


def test_invalid_horizons_are_na():
    base = benchmark.benchmark_spec(N=6, Ntilde=3)
    for K in (6, 7, 9, 0):
        cell = run_cell(base, 6, K, benchmark.X0, 1e-10, 2000)
        assert cell.status == "na" and not cell.ok


def test_small_sweep_rows_and_trend():
    base = benchmark.benchmark_spec(N=6, Ntilde=3)
    res = sweep(base, [6], [1, 3, 5, 7, 9], benchmark.X0, jobs=1)
    assert res.rows() == [6]
    assert res.horizons() == [1, 3, 5, 7, 9]
    assert [res.cell(6, K).status for K in (1, 3, 5, 7, 9)] == ["ok", "ok", "ok", "na", "na"]
    assert res.row_nonincreasing(6)
    for K in (1, 3, 5):
        cell = res.cell(6, K)
        assert cell.safe and cell.decay_ok and cell.terminated == "converged"
        assert cell.Ntilde == 6 - K


def test_parallel_sweep_matches_serial():
    base = benchmark.benchmark_spec(N=6, Ntilde=3)
    args = (base, [5, 6], [1, 2, 4], benchmark.X0)
    serial = sweep(*args, jobs=1)
    parallel = sweep(*args, jobs=2)
    assert serial.cells.keys() == parallel.cells.keys()
    for key, cell in serial.cells.items():
        other = parallel.cells[key]
        assert cell.status == other.status
        if cell.ok:
            assert cell.J == other.J
