"""Receding-horizon closed loop and the (N, constraint horizon) sweep."""

from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cbf import InvarianceReport, verify_invariance
from .lti import stage_cost, step
from .ocp import (
    InfeasibleOcp,
    OcpSolverError,
    OcpSpec,
    ValueTable,
    solve_partially_constrained,
    value_family,
)
from .subopt import BoundReport, DegenerateTrajectory, certify

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-10
DEFAULT_MAX_STEPS = 2000


class Termination(enum.Enum):
    CONVERGED = "converged"
    MAX_STEPS = "max_steps"
    INFEASIBLE = "infeasible"


@dataclass
class ClosedLoopRun:
    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    values: np.ndarray
    terminated: Termination
    tables: list[ValueTable] | None = None
    failure: InfeasibleOcp | None = None
    report: BoundReport | None = None

    @property
    def J(self) -> float:
        return float(self.stage_costs.sum())

    @property
    def T(self) -> int:
        return self.inputs.shape[0]


def run_closed_loop(
    spec: OcpSpec,
    x0,
    eps: float = DEFAULT_EPS,
    max_steps: int = DEFAULT_MAX_STEPS,
    certify_run: bool = False,
) -> ClosedLoopRun:
    """Apply mu_N until l(x, mu_N(x)) < eps or ``max_steps`` inputs were applied.

    With ``certify_run`` the full value table is recorded at every visited
    state, including the final one, and a bound report is attached.
    """
    x = np.asarray(x0, dtype=float).reshape(-1)
    states, inputs, costs, values = [x], [], [], []
    tables: list[ValueTable] | None = [] if certify_run else None
    failure = None
    terminated = Termination.MAX_STEPS
    for k in range(max_steps + 1):
        try:
            if certify_run:
                table = value_family(spec, x)
                tables.append(table)
                v, u = table.values[spec.N], table.mu_N
            else:
                sol = solve_partially_constrained(spec, x)
                v, u = sol.value, sol.first_input
        except InfeasibleOcp as exc:
            log.warning("closed loop stopped at step %d: %s", k, exc)
            failure = exc
            terminated = Termination.INFEASIBLE
            break
        values.append(v)
        l = stage_cost(spec.cost, x, u)
        if l < eps:
            terminated = Termination.CONVERGED
            break
        if k == max_steps:
            break
        inputs.append(u)
        costs.append(l)
        x = step(spec.sys, x, u)
        states.append(x)
    m = spec.sys.m
    run = ClosedLoopRun(
        states=np.array(states),
        inputs=np.array(inputs).reshape(-1, m),
        stage_costs=np.array(costs, dtype=float),
        values=np.array(values, dtype=float),
        terminated=terminated,
        tables=tables,
        failure=failure,
    )
    if certify_run and terminated is not Termination.INFEASIBLE:
        try:
            run.report = certify(spec, tables, run.J)
        except DegenerateTrajectory as exc:
            log.info("no bound report: %s", exc)
    return run


def invariance_of(spec: OcpSpec, run: ClosedLoopRun) -> InvarianceReport | None:
    if spec.barriers is None:
        return None
    return verify_invariance(spec.barriers, run.states, spec.qp_settings.feas_tol * 10)


@dataclass
class SweepCell:
    N: int
    constraint_horizon: int
    status: str
    J: float = math.nan
    V0: float = math.nan
    report: BoundReport | None = None
    terminated: str = ""
    steps: int = 0
    safe: bool | None = None
    decay_ok: bool | None = None
    message: str = ""

    @property
    def Ntilde(self) -> int:
        return self.N - self.constraint_horizon

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepResult:
    cells: dict[tuple[int, int], SweepCell] = field(default_factory=dict)

    def cell(self, N: int, horizon: int) -> SweepCell:
        return self.cells[(N, horizon)]

    def rows(self) -> list[int]:
        return sorted({N for N, _ in self.cells})

    def horizons(self) -> list[int]:
        return sorted({K for _, K in self.cells})

    def row_nonincreasing(self, N: int, slack: float = 1e-6) -> bool:
        Js = [self.cells[(N, K)].J for K in self.horizons() if (N, K) in self.cells
              and self.cells[(N, K)].ok]
        return all(b <= a + slack for a, b in zip(Js, Js[1:]))

    def column_nonincreasing(self, K: int, slack: float = 1e-6) -> bool:
        Js = [self.cells[(N, K)].J for N in self.rows() if (N, K) in self.cells
              and self.cells[(N, K)].ok]
        return all(b <= a + slack for a, b in zip(Js, Js[1:]))


def run_cell(base: OcpSpec, N: int, horizon: int, x0, eps: float, max_steps: int,
             certify_run: bool = True) -> SweepCell:
    if horizon > N - 1 or horizon < 1:
        return SweepCell(N, horizon, "na", message="constraint horizon outside 1..N-1")
    spec = base.replace(N=N, Ntilde=N - horizon)
    try:
        run = run_closed_loop(spec, x0, eps, max_steps, certify_run)
    except OcpSolverError as exc:
        return SweepCell(N, horizon, "error", message=str(exc))
    inv = invariance_of(spec, run)
    status = "ok" if run.terminated is not Termination.INFEASIBLE else "infeasible"
    V0 = float(run.values[0]) if run.values.size else math.nan
    return SweepCell(
        N=N,
        constraint_horizon=horizon,
        status=status,
        J=run.J,
        V0=V0,
        report=run.report,
        terminated=run.terminated.value,
        steps=run.T,
        safe=None if inv is None else inv.passed,
        decay_ok=None if inv is None else inv.decay_ok,
        message="" if run.failure is None else str(run.failure),
    )


def _run_cell_args(args):
    return run_cell(*args)


def sweep(
    base: OcpSpec,
    N_list: Sequence[int],
    horizons: Sequence[int],
    x0,
    eps: float = DEFAULT_EPS,
    max_steps: int = DEFAULT_MAX_STEPS,
    certify_run: bool = True,
    jobs: int | None = None,
) -> SweepResult:
    """Closed-loop run for every (N, N - Ntilde) pair; invalid pairs become N.A."""
    tasks = [(base, N, K, x0, eps, max_steps, certify_run) for N in N_list for K in horizons]
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            cells = list(pool.map(_run_cell_args, tasks))
    else:
        cells = [_run_cell_args(t) for t in tasks]
    result = SweepResult()
    for c in cells:
        result.cells[(c.N, c.constraint_horizon)] = c
    return result
