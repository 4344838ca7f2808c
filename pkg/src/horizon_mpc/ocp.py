"""Partially constrained finite-horizon OCPs condensed to dense QPs.

A horizon-``n`` problem started at ``x`` minimizes the sum of ``n`` stage
costs under the input box on every step. State constraints (plain affine
half-spaces and barrier decay conditions) are imposed only on the first
``c`` transitions, i.e. on ``x(1) .. x(c)``. The full problem uses
``n = N`` and ``c = N - Ntilde``; the backward tail family uses
``c = max(n - Ntilde, 0)``, so tails with ``n <= Ntilde`` carry input
bounds only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .cbf import AffineBarrier, AffineConstraint, AffineExpr, BarrierSet, step_constraint
from .lti import DiscreteLTI, StageCost, as_vector, stage_cost, step
from .qp import QpProblem, QpSettings, QpSolution, Status, solve_qp


class InfeasibleOcp(RuntimeError):
    """The OCP has no feasible input sequence at ``x0``.

    Under the control-invariance assumption this signals misuse: either the
    start state is outside the safe set or the set is not invariant.
    """

    def __init__(self, x0, reason: str, violated: Sequence[str] = ()):
        self.x0 = np.asarray(x0, dtype=float).copy()
        self.reason = reason
        self.violated = list(violated)
        msg = f"infeasible OCP at x0={self.x0.tolist()}: {reason}"
        if self.violated:
            msg += f" (violated: {', '.join(self.violated)})"
        super().__init__(msg)


class OcpSolverError(RuntimeError):
    """The QP solver stopped without an optimal or infeasible verdict."""


@dataclass(frozen=True, eq=False)
class OcpSpec:
    sys: DiscreteLTI
    cost: StageCost
    N: int
    Ntilde: int
    u_min: np.ndarray
    u_max: np.ndarray
    state_constraints: Sequence[AffineConstraint] = ()
    barriers: BarrierSet | None = None
    fully_constrained: bool = False
    affine_full_horizon: bool = False
    qp_settings: QpSettings = field(default_factory=QpSettings)

    def __post_init__(self):
        self.cost.check_dimensions(self.sys)
        m = self.sys.m
        u_min = np.broadcast_to(np.asarray(self.u_min, dtype=float), (m,)).copy()
        u_max = np.broadcast_to(np.asarray(self.u_max, dtype=float), (m,)).copy()
        if np.any(u_min > u_max):
            raise ValueError("input box has u_min > u_max")
        if np.any(u_min > 0) or np.any(u_max < 0):
            raise ValueError("input box must contain u = 0")
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)
        object.__setattr__(self, "state_constraints", tuple(self.state_constraints))
        if self.N < 2:
            raise ValueError(f"prediction horizon N must be >= 2, got {self.N}")
        low = 0 if self.fully_constrained else 1
        if not low <= self.Ntilde <= self.N - 1:
            raise ValueError(
                f"Ntilde={self.Ntilde} outside 1 <= Ntilde <= N-1 (N={self.N})"
                + ("" if self.fully_constrained else "; Ntilde=0 needs fully_constrained")
            )
        n = self.sys.n
        for con in self.state_constraints:
            if con.a.size != n:
                raise ValueError(f"state constraint has {con.a.size} coefficients, need {n}")
        if self.barriers is not None:
            for b in self.barriers.barriers:
                if b.n != n:
                    raise ValueError(f"barrier {b.name!r} has dimension {b.n}, need {n}")
            for con in self.barriers.extra_affine:
                if con.a.size != n:
                    raise ValueError("barrier-set affine constraint has wrong dimension")

    @property
    def constraint_horizon(self) -> int:
        return self.N - self.Ntilde

    @property
    def within_bound_range(self) -> bool:
        """Whether (N, Ntilde) lies in the range covered by the bound."""
        return 1 <= self.Ntilde <= self.N - 1

    def constrained_steps(self, n: int) -> int:
        return min(max(n - self.Ntilde, 0), n)

    def replace(self, **changes) -> "OcpSpec":
        fields = {
            k: getattr(self, k)
            for k in (
                "sys", "cost", "N", "Ntilde", "u_min", "u_max", "state_constraints",
                "barriers", "fully_constrained", "affine_full_horizon", "qp_settings",
            )
        }
        fields.update(changes)
        return OcpSpec(**fields)

    @property
    def affine_constraints(self) -> tuple[AffineConstraint, ...]:
        extra = self.barriers.extra_affine if self.barriers is not None else ()
        return tuple(self.state_constraints) + tuple(extra)

    @property
    def affine_barriers(self) -> tuple[AffineBarrier, ...]:
        if self.barriers is None:
            return ()
        return tuple(b for b in self.barriers.barriers if isinstance(b, AffineBarrier))

    def violations(self, x, tol: float) -> list[str]:
        x = np.asarray(x, dtype=float)
        out = []
        for i, b in enumerate(self.affine_barriers):
            if b(x) < -tol:
                out.append(b.name or f"h{i + 1}")
        for i, con in enumerate(self.affine_constraints):
            if con.slack(x) < -tol:
                out.append(f"affine{i + 1}")
        return out

    @cached_property
    def _prediction(self):
        """Phi[i] = A^i and Gamma[i] = [A^(i-1) B, ..., B, 0, ...] for i = 0..N."""
        A, B = self.sys.A, self.sys.B
        n, m, N = self.sys.n, self.sys.m, self.N
        Phi = np.zeros((N + 1, n, n))
        Gamma = np.zeros((N + 1, n, N * m))
        Phi[0] = np.eye(n)
        for i in range(1, N + 1):
            Phi[i] = A @ Phi[i - 1]
            Gamma[i] = A @ Gamma[i - 1]
            Gamma[i][:, (i - 1) * m : i * m] = B
        return Phi, Gamma

    @cached_property
    def _cache(self) -> dict:
        return {}

    def _cost_terms(self, n: int):
        key = ("cost", n)
        if key not in self._cache:
            Phi, Gamma = self._prediction
            m = self.sys.m
            Q, R = self.cost.Q, self.cost.R
            H = np.kron(np.eye(n), R)
            F = np.zeros((n * m, self.sys.n))
            for i in range(n):
                Gi = Gamma[i][:, : n * m]
                H += Gi.T @ Q @ Gi
                F += Gi.T @ Q @ Phi[i]
            self._cache[key] = (H + H.T, 2.0 * F)
        return self._cache[key]

    def _constraint_terms(self, n: int, c: int):
        """G, h0, h_lin with rows G z <= h0 + h_lin @ x, plus barrier row info."""
        key = ("cons", n, c)
        if key in self._cache:
            return self._cache[key]
        Phi, Gamma = self._prediction
        nx, m = self.sys.n, self.sys.m
        width = n * m
        basis = [np.zeros(nx)] + list(np.eye(nx))
        rows: list[np.ndarray] = []
        rhs_cols: list[list[float]] = []
        first_step_barrier_rows: list[tuple[int, AffineBarrier]] = []

        def add(builder, tag=None):
            cons = [builder(x) for x in basis]
            rows.append(cons[0].a)
            rhs_cols.append([cons[0].b] + [ck.b - cons[0].b for ck in cons[1:]])
            if tag is not None:
                first_step_barrier_rows.append((len(rows) - 1, tag))

        for j in range(n):
            for k in range(m):
                if np.isfinite(self.u_max[k]):
                    e = np.zeros(width)
                    e[j * m + k] = 1.0
                    rows.append(e)
                    rhs_cols.append([self.u_max[k]] + [0.0] * nx)
                if np.isfinite(self.u_min[k]):
                    e = np.zeros(width)
                    e[j * m + k] = -1.0
                    rows.append(e)
                    rhs_cols.append([-self.u_min[k]] + [0.0] * nx)

        def expr(i, x):
            return AffineExpr(Gamma[i][:, :width], Phi[i] @ x)

        affine_steps = n if self.affine_full_horizon else c
        for j in range(affine_steps):
            for con in self.affine_constraints:
                add(lambda x, con=con, j=j: con.on_expr(expr(j + 1, x)))
        for j in range(c):
            for b in self.affine_barriers:
                add(
                    lambda x, b=b, j=j: step_constraint(b, expr(j, x), expr(j + 1, x)),
                    tag=b if j == 0 else None,
                )
        if rows:
            G = np.array(rows)
            cols = np.array(rhs_cols)
            h0, h_lin = cols[:, 0], cols[:, 1:]
        else:
            G, h0, h_lin = np.zeros((0, width)), np.zeros(0), np.zeros((0, nx))
        out = (G, h0, h_lin, tuple(first_step_barrier_rows))
        self._cache[key] = out
        return out

    def build_qp(self, x0, n: int | None = None, constrained: int | None = None):
        """Condensed QP for horizon ``n`` with ``constrained`` leading state steps.

        The objective omits the constant ``x0' (sum Phi'Q Phi) x0``.
        """
        n = self.N if n is None else n
        c = self.constrained_steps(n) if constrained is None else constrained
        x0 = as_vector(x0, self.sys.n, "x0")
        H, F = self._cost_terms(n)
        G, h0, h_lin, first_rows = self._constraint_terms(n, c)
        h = h0 + h_lin @ x0
        for row, b in first_rows:
            hb = b(x0)
            if hb < 0:
                h[row] += (1.0 - b.gamma) * hb
        return QpProblem(H, F @ x0, G, h)


@dataclass
class OpenLoopSolution:
    inputs: np.ndarray
    states: np.ndarray
    value: float
    feasible: bool
    constrained_steps: int
    qp: QpSolution | None = None

    @property
    def first_input(self) -> np.ndarray:
        return self.inputs[0]

    def mu(self, p: int) -> np.ndarray:
        """Open-loop control indexed from the end: mu_p = u*(N - p)."""
        N = self.inputs.shape[0]
        if not 1 <= p <= N:
            raise IndexError(f"p must lie in 1..{N}")
        return self.inputs[N - p]


def _forward(spec: OcpSpec, x0, inputs) -> np.ndarray:
    states = [np.asarray(x0, dtype=float)]
    for u in inputs:
        states.append(step(spec.sys, states[-1], u))
    return np.array(states)


def solve_tail(spec: OcpSpec, x0, n: int, constrained: int | None = None) -> OpenLoopSolution:
    """Solve the horizon-``n`` instance started at ``x0``."""
    x0 = as_vector(x0, spec.sys.n, "x0")
    m = spec.sys.m
    if n == 0:
        return OpenLoopSolution(np.zeros((0, m)), x0[None, :], 0.0, True, 0)
    c = spec.constrained_steps(n) if constrained is None else constrained
    tol = spec.qp_settings.feas_tol
    if c > 0:
        bad = spec.violations(x0, tol)
        if bad:
            raise InfeasibleOcp(x0, "start state outside the constraint set", bad)
    qp = spec.build_qp(x0, n, c)
    sol = solve_qp(qp, spec.qp_settings)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleOcp(x0, f"QP infeasible (horizon {n}, {c} constrained steps)")
    if sol.status is not Status.OPTIMAL:
        raise OcpSolverError(
            f"QP solver stopped with {sol.status.value} after {sol.iterations} iterations "
            f"at x0={x0.tolist()}"
        )
    inputs = sol.z.reshape(n, m)
    states = _forward(spec, x0, inputs)
    value = sum(stage_cost(spec.cost, states[i], inputs[i]) for i in range(n))
    return OpenLoopSolution(inputs, states, float(value), True, c, sol)


def solve_partially_constrained(spec: OcpSpec, x0) -> OpenLoopSolution:
    return solve_tail(spec, x0, spec.N, spec.constraint_horizon)


@dataclass
class ValueTable:
    """Backward value family at one state.

    ``values[n]`` is V_n for n = 0..N; ``first_inputs[n]`` and
    ``first_stage_costs[n]`` hold mu_n(x) and l(x, mu_n(x)) for n = 1..N
    (index 0 is NaN).
    """

    x: np.ndarray
    Ntilde: int
    values: np.ndarray
    first_inputs: np.ndarray
    first_stage_costs: np.ndarray
    solutions: list = field(default_factory=list, repr=False)

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def mu_N(self) -> np.ndarray:
        return self.first_inputs[self.N]


def value_family(spec: OcpSpec, x) -> ValueTable:
    x = as_vector(x, spec.sys.n, "x")
    N, m = spec.N, spec.sys.m
    values = np.zeros(N + 1)
    mus = np.full((N + 1, m), np.nan)
    costs = np.full(N + 1, np.nan)
    sols = [None]
    for n in range(1, N + 1):
        sol = solve_tail(spec, x, n)
        values[n] = sol.value
        mus[n] = sol.first_input
        costs[n] = stage_cost(spec.cost, x, sol.first_input)
        sols.append(sol)
    return ValueTable(x, spec.Ntilde, values, mus, costs, sols)


def bellman_residual(spec: OcpSpec, x, n: int, table: ValueTable | None = None) -> float:
    """|V_n(x) - V_{n-1}(f(x, mu_n(x))) - l(x, mu_n(x))|."""
    if not 1 <= n <= spec.N:
        raise ValueError(f"n must lie in 1..{spec.N}")
    x = as_vector(x, spec.sys.n, "x")
    if table is not None:
        v_n, mu, l = table.values[n], table.first_inputs[n], table.first_stage_costs[n]
    else:
        sol = solve_tail(spec, x, n)
        v_n, mu = sol.value, sol.first_input
        l = stage_cost(spec.cost, x, mu)
    x_next = step(spec.sys, x, mu)
    v_prev = solve_tail(spec, x_next, n - 1).value
    return abs(v_n - v_prev - l)
