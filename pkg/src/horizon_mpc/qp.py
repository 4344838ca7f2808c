"""Dense convex QP solver.

Solves::

    minimize    1/2 z'Hz + g'z
    subject to  G z <= h

with H positive definite. The main loop is an ADMM operator splitting with
over-relaxation and diagonal (Ruiz) equilibration. Once the iterates suggest
an active set, a polishing step solves the equality-constrained KKT system on
that set and accepts the result only if it passes a full KKT check, so the
returned minimizer is accurate to roughly machine precision rather than to
the ADMM tolerance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class QpError(ValueError):
    """Malformed QP data (shapes, symmetry, definiteness)."""


class SingularKkt(np.linalg.LinAlgError):
    """The equality-constrained KKT matrix is singular."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class QpSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 50_000
    rho: float = 0.1
    sigma: float = 1e-6
    relax: float = 1.6
    infeas_tol: float = 1e-6
    check_every: int = 10
    adapt_every: int = 50
    scaling_iter: int = 10
    polish: bool = True
    max_polish_fixes: int = 25


class QpProblem:
    """QP data. ``G`` and ``h`` may be empty (no inequality constraints)."""

    def __init__(self, H, g, G=None, h=None, *, pd_tol: float = 1e-10):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        g = np.asarray(g, dtype=float).reshape(-1)
        d = g.size
        if H.shape != (d, d):
            raise QpError(f"H must be {d}x{d}, got {H.shape}")
        if G is None:
            G = np.zeros((0, d))
            h = np.zeros(0)
        G = np.asarray(G, dtype=float).reshape(-1, d) if d else np.zeros((0, 0))
        h = np.asarray(h, dtype=float).reshape(-1)
        if G.shape[0] != h.size:
            raise QpError(f"G has {G.shape[0]} rows but h has {h.size} entries")
        for name, arr in (("H", H), ("g", g), ("G", G), ("h", h)):
            if not np.all(np.isfinite(arr)):
                raise QpError(f"{name} contains non-finite entries")
        scale = max(1.0, float(np.abs(H).max(initial=0.0)))
        if np.abs(H - H.T).max(initial=0.0) > 1e-10 * scale:
            raise QpError("H must be symmetric")
        H = 0.5 * (H + H.T)
        if d and np.linalg.eigvalsh(H).min() <= pd_tol:
            raise QpError("H must be positive definite")
        self.H, self.g, self.G, self.h = H, g, G, h

    @property
    def d(self) -> int:
        return self.g.size

    @property
    def q(self) -> int:
        return self.h.size

    def objective(self, z) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    value: float
    status: Status
    iterations: int
    primal_residual: float
    dual_residual: float
    multipliers: np.ndarray
    polished: bool = False

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def solve_equality_kkt(H, g, Aeq=None, beq=None, *, return_multipliers=False):
    """Stationary point of 1/2 z'Hz + g'z subject to Aeq z = beq.

    Raises SingularKkt when the constraint rows are (numerically) linearly
    dependent, which is the only way the KKT matrix can be singular for PD H.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    g = np.asarray(g, dtype=float).reshape(-1)
    d = g.size
    if Aeq is None or np.size(Aeq) == 0:
        try:
            c, low = sla.cho_factor(H)
        except np.linalg.LinAlgError as exc:
            raise SingularKkt("H is not positive definite") from exc
        z = sla.cho_solve((c, low), -g)
        return (z, np.zeros(0)) if return_multipliers else z
    Aeq = np.asarray(Aeq, dtype=float).reshape(-1, d)
    beq = np.asarray(beq, dtype=float).reshape(-1)
    k = Aeq.shape[0]
    if k > d:
        raise SingularKkt(f"{k} equality rows exceed {d} variables")
    sv = np.linalg.svd(Aeq, compute_uv=False)
    if sv[-1] <= 1e-12 * max(1.0, sv[0]):
        raise SingularKkt("equality constraint rows are linearly dependent")
    kkt = np.zeros((d + k, d + k))
    kkt[:d, :d] = H
    kkt[:d, d:] = Aeq.T
    kkt[d:, :d] = Aeq
    sol = np.linalg.solve(kkt, np.concatenate([-g, beq]))
    z, nu = sol[:d], sol[d:]
    return (z, nu) if return_multipliers else z


def _regularized_kkt(H, g, Aeq, beq, delta=1e-10, refine=8):
    """KKT solve tolerant of dependent rows, with iterative refinement."""
    d, k = g.size, Aeq.shape[0]
    exact = np.zeros((d + k, d + k))
    exact[:d, :d] = H
    exact[:d, d:] = Aeq.T
    exact[d:, :d] = Aeq
    reg = exact.copy()
    reg[:d, :d] += delta * np.eye(d)
    reg[d:, d:] -= delta * np.eye(k)
    lu = sla.lu_factor(reg)
    rhs = np.concatenate([-g, beq])
    sol = sla.lu_solve(lu, rhs)
    for _ in range(refine):
        sol = sol + sla.lu_solve(lu, rhs - exact @ sol)
    return sol[:d], sol[d:]


def _kkt_errors(p: QpProblem, z, lam):
    stat = p.H @ z + p.g + p.G.T @ lam
    slack = p.G @ z - p.h
    return (
        float(np.abs(stat).max(initial=0.0)),
        float(slack.max(initial=-np.inf)),
        float(np.abs(lam * slack).max(initial=0.0)),
    )


def _stationarity_tol(p: QpProblem, z, lam, s: QpSettings) -> float:
    scale = max(
        np.abs(p.H @ z).max(initial=0.0),
        np.abs(p.G.T @ lam).max(initial=0.0),
        np.abs(p.g).max(initial=0.0),
    )
    return s.abs_tol + s.rel_tol * scale


def _polish(p: QpProblem, active: np.ndarray, s: QpSettings):
    """Primal-dual active-set correction started from a guessed active set.

    Returns ``(z, lam)`` passing the KKT check, or None.
    """
    active = active.copy()
    seen = set()
    for _ in range(s.max_polish_fixes):
        key = active.tobytes()
        if key in seen:
            return None
        seen.add(key)
        idx = np.flatnonzero(active)
        Aeq, beq = p.G[idx], p.h[idx]
        try:
            z, nu = solve_equality_kkt(p.H, p.g, Aeq, beq, return_multipliers=True)
        except SingularKkt:
            z, nu = _regularized_kkt(p.H, p.g, Aeq, beq)
        lam = np.zeros(p.q)
        lam[idx] = nu
        viol = p.G @ z - p.h
        stat_tol = _stationarity_tol(p, z, lam, s)
        neg = nu < -stat_tol
        if np.any(neg):
            active[idx[np.argmin(nu)]] = False
            continue
        outside = np.where(active, -np.inf, viol)
        if outside.size and outside.max() > s.feas_tol:
            active[np.argmax(outside)] = True
            continue
        lam = np.maximum(lam, 0.0)
        stat, feas, comp = _kkt_errors(p, z, lam)
        if stat <= _stationarity_tol(p, z, lam, s) and feas <= s.feas_tol and comp <= s.abs_tol:
            return z, lam
        return None
    return None


def _ruiz(H, G, iters):
    d, q = H.shape[0], G.shape[0]
    D = np.ones(d)
    E = np.ones(q)
    Hs, Gs = H.copy(), G.copy()
    for _ in range(iters):
        col = np.maximum(np.abs(Hs).max(axis=0), np.abs(Gs).max(axis=0, initial=0.0))
        row = np.abs(Gs).max(axis=1, initial=0.0)
        dd = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        ee = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Hs = dd[:, None] * Hs * dd[None, :]
        Gs = ee[:, None] * Gs * dd[None, :]
        D *= dd
        E *= ee
    c = 1.0 / max(1e-4, float(np.abs(Hs).max(axis=0).mean()))
    return D, E, c


def _finish(p, z, lam, status, iterations, polished=False):
    stat, feas, _ = _kkt_errors(p, z, lam)
    return QpSolution(
        z=z,
        value=p.objective(z),
        status=status,
        iterations=iterations,
        primal_residual=max(feas, 0.0),
        dual_residual=stat,
        multipliers=lam,
        polished=polished,
    )


def solve_qp(p: QpProblem, settings: QpSettings | None = None, initial=None) -> QpSolution:
    """Solve the QP; ``initial`` optionally seeds the primal iterate."""
    s = settings or QpSettings()
    d, q = p.d, p.q
    z_free = solve_equality_kkt(p.H, p.g)
    if q == 0 or (p.G @ z_free - p.h).max() <= s.feas_tol:
        return _finish(p, z_free, np.zeros(q), Status.OPTIMAL, 0, polished=True)

    if s.polish:
        guess = p.G @ (z_free if initial is None else np.asarray(initial, float)) - p.h > 0
        res = _polish(p, guess, s)
        if res is not None:
            return _finish(p, res[0], res[1], Status.OPTIMAL, 0, polished=True)

    D, E, c = _ruiz(p.H, p.G, s.scaling_iter)
    Hs = c * (D[:, None] * p.H * D[None, :])
    gs = c * D * p.g
    Gs = E[:, None] * p.G * D[None, :]
    hs = E * p.h

    rho = s.rho
    x = np.zeros(d) if initial is None else np.asarray(initial, float) / D
    sv = Gs @ x
    z = np.minimum(sv, hs)
    y = np.zeros(q)
    eye = np.eye(d)

    def factor(r):
        return np.linalg.inv(Hs + s.sigma * eye + r * (Gs.T @ Gs))

    Minv = factor(rho)
    last_guess = None
    a = s.relax
    it = 0
    for it in range(1, s.max_iter + 1):
        xt = Minv @ (s.sigma * x - gs + Gs.T @ (rho * z - y))
        zt = Gs @ xt
        x = a * xt + (1.0 - a) * x
        z_hat = a * zt + (1.0 - a) * z
        z_new = np.minimum(z_hat + y / rho, hs)
        y_new = y + rho * (z_hat - z_new)
        dy = y_new - y
        z, y = z_new, y_new

        if it % s.check_every:
            continue
        # residuals in the original (unscaled) space
        zo = D * x
        lam = E * y / c
        Gz = p.G @ zo
        slack_o = z / E
        r_p = float(np.abs(Gz - slack_o).max())
        Hz = p.H @ zo
        Gtl = p.G.T @ lam
        r_d = float(np.abs(Hz + p.g + Gtl).max())
        eps_p = s.abs_tol + s.rel_tol * max(np.abs(Gz).max(), np.abs(slack_o).max())
        eps_d = s.abs_tol + s.rel_tol * max(
            np.abs(Hz).max(), np.abs(Gtl).max(), np.abs(p.g).max()
        )

        if r_p > eps_p:
            dyp = np.maximum(E * dy, 0.0)
            ndy = float(dyp.max())
            if ndy > 0:
                if (
                    np.abs(p.G.T @ dyp).max() <= s.infeas_tol * ndy
                    and p.h @ dyp <= -s.infeas_tol * ndy
                ):
                    return _finish(p, zo, np.maximum(lam, 0), Status.INFEASIBLE, it)

        if s.polish:
            guess = Gz - p.h > -lam
            key = guess.tobytes()
            if key != last_guess:
                last_guess = key
                res = _polish(p, guess, s)
                if res is not None:
                    return _finish(p, res[0], res[1], Status.OPTIMAL, it, polished=True)

        if r_p <= eps_p and r_d <= eps_d:
            viol = float((Gz - p.h).max())
            if viol <= s.feas_tol:
                return _finish(p, zo, np.maximum(lam, 0), Status.OPTIMAL, it)

        if it % s.adapt_every == 0:
            num = r_p / max(np.abs(Gs @ x).max(), np.abs(z).max(), 1e-30)
            den = r_d / max(
                np.abs(Hs @ x).max(), np.abs(Gs.T @ y).max(), np.abs(gs).max(), 1e-30
            )
            new_rho = float(np.clip(rho * np.sqrt(num / max(den, 1e-30)), 1e-6, 1e6))
            if new_rho > 5 * rho or new_rho < 0.2 * rho:
                rho = new_rho
                Minv = factor(rho)

    zo = D * x
    return _finish(p, zo, np.maximum(E * y / c, 0), Status.MAX_ITERATIONS, it)
