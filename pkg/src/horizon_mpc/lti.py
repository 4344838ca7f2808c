"""Discrete-time linear dynamics and quadratic stage cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not fit the system dimensions."""


def _as_matrix(value, name: str) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.ndim != 2:
        raise DimensionError(f"{name} must be a 2D matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} contains non-finite entries")
    return mat


def as_vector(value, size: int, name: str) -> np.ndarray:
    vec = np.asarray(value, dtype=float).reshape(-1)
    if vec.size != size:
        raise DimensionError(f"{name} must have {size} entries, got {vec.size}")
    return vec


@dataclass(frozen=True, eq=False)
class DiscreteLTI:
    """Linear system x(k+1) = A x(k) + B u(k)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B must have {A.shape[0]} rows, got {B.shape[0]}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u) -> np.ndarray:
        return step(self, x, u)


@dataclass(frozen=True, eq=False)
class StageCost:
    """Quadratic stage cost l(x, u) = x'Qx + u'Ru.

    Q must be positive semidefinite and R positive definite. Both are
    symmetrized on construction.
    """

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        for name, mat in (("Q", Q), ("R", R)):
            if mat.shape[0] != mat.shape[1]:
                raise DimensionError(f"{name} must be square, got {mat.shape}")
        Q = 0.5 * (Q + Q.T)
        R = 0.5 * (R + R.T)
        scale_q = max(1.0, float(np.abs(Q).max()))
        if np.linalg.eigvalsh(Q).min() < -1e-12 * scale_q:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 1e-12 * max(1.0, float(np.abs(R).max())):
            raise ValueError("R must be positive definite")
        Q.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    def check_dimensions(self, sys: DiscreteLTI) -> None:
        if self.Q.shape != (sys.n, sys.n) or self.R.shape != (sys.m, sys.m):
            raise DimensionError(
                f"cost shapes Q{self.Q.shape}, R{self.R.shape} do not match "
                f"system with n={sys.n}, m={sys.m}"
            )

    def __call__(self, x, u) -> float:
        return stage_cost(self, x, u)


def step(sys: DiscreteLTI, x, u) -> np.ndarray:
    x = as_vector(x, sys.n, "x")
    u = as_vector(u, sys.m, "u")
    return sys.A @ x + sys.B @ u


def stage_cost(c: StageCost, x, u) -> float:
    x = as_vector(x, c.Q.shape[0], "x")
    u = as_vector(u, c.R.shape[0], "u")
    return float(x @ c.Q @ x + u @ c.R @ u)


def double_integrator(dt: float) -> DiscreteLTI:
    """Planar double integrator under exact zero-order-hold discretization.

    State is ``[p_x, p_y, v_x, v_y]``, input is ``[a_x, a_y]``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    B = np.zeros((4, 2))
    B[0, 0] = B[1, 1] = 0.5 * dt * dt
    B[2, 0] = B[3, 1] = dt
    return DiscreteLTI(A, B)
