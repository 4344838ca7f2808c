"""Discrete-time control barrier functions and affine state constraints.

Barrier constraints are emitted as half-spaces over the decision vector of a
condensed OCP: every predicted state is an affine expression ``M z + v`` of
the stacked inputs ``z``, so an affine barrier with linear decay keeps the
problem a QP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lti import DimensionError, as_vector


class UnsupportedBarrier(TypeError):
    """A non-affine barrier was used where an affine one is required."""


@dataclass(frozen=True, eq=False)
class AffineExpr:
    """Affine map ``z -> matrix @ z + offset``."""

    matrix: np.ndarray
    offset: np.ndarray

    @classmethod
    def constant(cls, x) -> "AffineExpr":
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(np.zeros((x.size, 0)), x)

    def __call__(self, z) -> np.ndarray:
        return self.matrix @ np.asarray(z, dtype=float) + self.offset


@dataclass(frozen=True, eq=False)
class AffineConstraint:
    """Half-space ``a @ v <= b``."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(-1))
        object.__setattr__(self, "b", float(self.b))

    def slack(self, v) -> float:
        """``b - a @ v``; nonnegative iff satisfied."""
        return float(self.b - self.a @ np.asarray(v, dtype=float))

    def on_expr(self, expr: AffineExpr) -> "AffineConstraint":
        """Pull the constraint back through ``v = expr(z)``."""
        return AffineConstraint(self.a @ expr.matrix, self.b - self.a @ expr.offset)


@dataclass(frozen=True, eq=False)
class AffineBarrier:
    """b(x) = a'x + c with linear decay rate gamma in (0, 1]."""

    a: np.ndarray
    c: float
    gamma: float
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(-1))
        object.__setattr__(self, "c", float(self.c))
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not np.any(self.a) and self.c < 0:
            raise ValueError("barrier has an empty safe set")

    @property
    def n(self) -> int:
        return self.a.size

    def __call__(self, x) -> float:
        return float(self.a @ as_vector(x, self.n, "x") + self.c)

    def witness(self) -> np.ndarray:
        """A point of the safe set {b >= 0}, on its boundary when a != 0."""
        nrm = float(self.a @ self.a)
        if nrm == 0.0:
            return np.zeros(self.n)
        return -self.c * self.a / nrm


@dataclass(frozen=True, eq=False)
class FunctionBarrier:
    """General barrier given by a callable; usable for evaluation only."""

    func: Callable[[np.ndarray], float]
    n: int
    name: str = ""

    def __call__(self, x) -> float:
        return float(self.func(as_vector(x, self.n, "x")))


def evaluate(b, x) -> float:
    return b(x)


def step_constraint(b, x_now: AffineExpr, x_next: AffineExpr) -> AffineConstraint:
    """Half-space form of b(x_next) - (1 - gamma) b(x_now) >= 0."""
    if not isinstance(b, AffineBarrier):
        raise UnsupportedBarrier(f"step constraints need an affine barrier, got {type(b).__name__}")
    keep = 1.0 - b.gamma
    now_m, next_m = x_now.matrix, x_next.matrix
    width = max(now_m.shape[1], next_m.shape[1])
    # constant expressions have zero-width matrices; widen them
    if now_m.shape[1] == 0:
        now_m = np.zeros((now_m.shape[0], width))
    if next_m.shape[1] == 0:
        next_m = np.zeros((next_m.shape[0], width))
    if now_m.shape[1] != next_m.shape[1]:
        raise DimensionError(
            f"expressions act on {now_m.shape[1]} and {next_m.shape[1]} decision variables"
        )
    row = keep * (b.a @ now_m) - b.a @ next_m
    rhs = (b.a @ x_next.offset + b.c) - keep * (b.a @ x_now.offset + b.c)
    return AffineConstraint(row, rhs)


@dataclass(frozen=True, eq=False)
class BarrierSet:
    """Barriers with decay plus plain affine state constraints ``a'x <= b``."""

    barriers: Sequence[AffineBarrier | FunctionBarrier] = ()
    extra_affine: Sequence[AffineConstraint] = ()
    witness: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "barriers", tuple(self.barriers))
        object.__setattr__(self, "extra_affine", tuple(self.extra_affine))
        if self.witness is not None:
            w = np.asarray(self.witness, dtype=float)
            if self.violations(w, tol=0.0):
                raise ValueError("witness lies outside the safe set")
            object.__setattr__(self, "witness", w)

    def values(self, x) -> np.ndarray:
        """Barrier values followed by affine slacks; all >= 0 inside the set."""
        x = np.asarray(x, dtype=float)
        vals = [b(x) for b in self.barriers]
        vals += [c.slack(x) for c in self.extra_affine]
        return np.array(vals, dtype=float)

    def labels(self) -> list[str]:
        out = [b.name or f"h{i + 1}" for i, b in enumerate(self.barriers)]
        out += [f"affine{i + 1}" for i in range(len(self.extra_affine))]
        return out

    def violations(self, x, tol: float = 1e-8) -> list[str]:
        vals = self.values(x)
        return [lab for lab, v in zip(self.labels(), vals) if v < -tol]

    def __len__(self):
        return len(self.barriers) + len(self.extra_affine)


@dataclass
class InvarianceReport:
    passed: bool
    min_values: np.ndarray
    satisfied: np.ndarray
    offending: list[int] = field(default_factory=list)
    decay_ok: bool = True


def verify_invariance(bs: BarrierSet, trajectory, feas_tol: float = 1e-8) -> InvarianceReport:
    """Check every state of a trajectory against the barrier set.

    ``decay_ok`` additionally reports whether each affine barrier obeyed its
    one-step decay condition along the trajectory.
    """
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if traj.shape[0] == 0:
        raise ValueError("trajectory must contain at least one state")
    vals = np.array([bs.values(x) for x in traj]).reshape(traj.shape[0], len(bs))
    satisfied = vals >= -feas_tol
    ok_rows = satisfied.all(axis=1)
    decay_ok = True
    for i, b in enumerate(bs.barriers):
        if isinstance(b, AffineBarrier) and traj.shape[0] > 1:
            hb = vals[:, i]
            if np.any(hb[1:] - (1.0 - b.gamma) * np.maximum(hb[:-1], 0.0) < -feas_tol):
                decay_ok = False
    min_vals = vals.min(axis=1) if vals.shape[1] else np.full(traj.shape[0], np.inf)
    return InvarianceReport(
        passed=bool(ok_rows.all()),
        min_values=min_vals,
        satisfied=satisfied,
        offending=[int(k) for k in np.flatnonzero(~ok_rows)],
        decay_ok=decay_ok,
    )


def velocity_l1_bound(limit: float, n: int = 4, vel_index=(2, 3)) -> list[AffineConstraint]:
    """|v_x| + |v_y| <= limit as four half-spaces."""
    i, j = vel_index
    if max(i, j) >= n:
        raise DimensionError(f"velocity indices {vel_index} out of range for n={n}")
    out = []
    for si in (1.0, -1.0):
        for sj in (1.0, -1.0):
            a = np.zeros(n)
            a[i], a[j] = si, sj
            out.append(AffineConstraint(a, limit))
    return out


def benchmark_barriers(gamma: float = 0.8, velocity_limit: float = 2.0) -> BarrierSet:
    """Two planar position barriers and the L1 velocity bound."""
    h1 = AffineBarrier([5.0 / 9.0, 1.0, 0.0, 0.0], 0.5 / 9.0, gamma, name="h1")
    h2 = AffineBarrier([1.0, -1.0, 0.0, 0.0], 1.6, gamma, name="h2")
    return BarrierSet([h1, h2], velocity_l1_bound(velocity_limit), witness=np.zeros(4))
