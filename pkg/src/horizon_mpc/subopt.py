"""Online suboptimality certificates for the partially constrained MPC loop.

The ratio parameter ``beta`` is estimated from value tables recorded along
a closed-loop trajectory. It yields the suboptimality degree ``alpha``, the
relaxed dynamic programming inequality checks, and a sufficient prediction
horizon for stability. All power expressions are evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ocp import OcpSpec, ValueTable, solve_partially_constrained
from .lti import stage_cost, step

BETA_MIN = 1e-6
DENOM_TOL = 1e-9


class DegenerateTrajectory(ValueError):
    """No usable ratio was found (e.g. the run started at the equilibrium)."""


def _check_domain(beta: float, N: int, Ntilde: int, fully_constrained: bool = False):
    if not (beta > 0 and math.isfinite(beta)):
        raise ValueError(f"beta must be positive and finite, got {beta}")
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    low = 0 if fully_constrained else 1
    if not low <= Ntilde <= N - 1:
        raise ValueError(f"Ntilde={Ntilde} outside {low} <= Ntilde <= N-1 (N={N})")


def _log_excess(beta: float, K: int) -> float:
    # log of beta^(K+1) / (beta+1)^(K-1)
    return (K + 1) * math.log(beta) - (K - 1) * math.log1p(beta)


def alpha_of(beta: float, N: int, Ntilde: int, *, fully_constrained: bool = False) -> float:
    """alpha = 1 - beta^(K+1) / (beta+1)^(K-1) with K = N - Ntilde."""
    _check_domain(beta, N, Ntilde, fully_constrained)
    t = _log_excess(beta, N - Ntilde)
    if t > 700.0:
        return -math.inf
    return -math.expm1(t)


def applicability(beta: float, N: int, Ntilde: int, *, fully_constrained: bool = False) -> bool:
    """(beta+1)^(K-1) > beta^(K+1), i.e. alpha > 0."""
    _check_domain(beta, N, Ntilde, fully_constrained)
    return _log_excess(beta, N - Ntilde) < 0.0


def eta(beta: float, n: int, Ntilde: int) -> float:
    """(b+1)^(m-1) / ((b+1)^(m-1) + b^m) with m = n - Ntilde >= 1."""
    m = n - Ntilde
    if m < 1:
        raise ValueError("eta is defined for n >= Ntilde + 1")
    t = m * math.log(beta) - (m - 1) * math.log1p(beta)
    if t > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(t))


def min_stabilizing_horizon(beta: float, Ntilde: int) -> int:
    """ceil(Ntilde + (log(b+1) + log b) / (log(b+1) - log b)), floored at Ntilde + 1."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if Ntilde < 1:
        raise ValueError(f"Ntilde must be >= 1, got {Ntilde}")
    lb1, lb = math.log1p(beta), math.log(beta)
    ratio = (lb1 + lb) / (lb1 - lb)
    return max(Ntilde + 1, math.ceil(Ntilde + ratio))


def beta_candidates(table: ValueTable, denom_tol: float = DENOM_TOL) -> np.ndarray:
    """The N - Ntilde + 1 per-state ratios; NaN marks a skipped entry.

    Entry 0 is V_{Nt+1}/V_{Nt} - 1, entries 1.. are V_n / l(x, mu_n(x)) - 1
    for n = Nt+1 .. N.
    """
    Nt, N = table.Ntilde, table.N
    out = np.full(N - Nt + 1, np.nan)
    V = table.values
    if V[Nt] >= denom_tol:
        out[0] = V[Nt + 1] / V[Nt] - 1.0
    for i, n in enumerate(range(Nt + 1, N + 1), start=1):
        l = table.first_stage_costs[n]
        if l >= denom_tol:
            out[i] = V[n] / l - 1.0
    return out


@dataclass
class BetaRecord:
    matrix: np.ndarray
    beta: float
    skipped: int
    beta_min: float = BETA_MIN

    @property
    def T(self) -> int:
        return self.matrix.shape[1]

    @property
    def raw_max(self) -> float:
        return float(np.nanmax(self.matrix))


def aggregate_beta(columns: Iterable[np.ndarray], beta_min: float = BETA_MIN) -> BetaRecord:
    """Largest finite candidate over the trajectory, floored at ``beta_min``."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    if not cols:
        raise DegenerateTrajectory("no closed-loop samples")
    matrix = np.column_stack(cols)
    finite = np.isfinite(matrix)
    skipped = int((~finite).sum())
    if not finite.any():
        raise DegenerateTrajectory("all beta candidates were skipped")
    matrix = np.where(finite, matrix, np.nan)
    beta = max(float(np.nanmax(matrix)), beta_min)
    return BetaRecord(matrix, beta, skipped, beta_min)


def lemma1_step_check(
    spec: OcpSpec, x, alpha: float, table: ValueTable | None = None, next_value: float | None = None
) -> float:
    """V_N(x) - V_N(f(x, mu_N(x))) - alpha * l(x, mu_N(x))."""
    if table is not None:
        v, mu = table.values[spec.N], table.mu_N
    else:
        sol = solve_partially_constrained(spec, x)
        v, mu = sol.value, sol.first_input
    x_next = step(spec.sys, x, mu)
    if next_value is None:
        next_value = solve_partially_constrained(spec, x_next).value
    return float(v - next_value - alpha * stage_cost(spec.cost, x, mu))


def lemma2_chain_check(table: ValueTable, beta: float) -> np.ndarray:
    """V_{n-1}(x) - eta_n V_n(x) for n = Ntilde+1 .. N."""
    Nt, N = table.Ntilde, table.N
    V = table.values
    return np.array([V[n - 1] - eta(beta, n, Nt) * V[n] for n in range(Nt + 1, N + 1)])


@dataclass
class BoundReport:
    N: int
    Ntilde: int
    beta: float
    alpha: float
    applicable: bool
    V0: float
    J: float
    bound_holds: bool | None
    per_step_decrease: list[float]
    min_stabilizing_N: int
    eta_chain_min: list[float] = field(default_factory=list)
    decrease_hypothesis: list[float] = field(default_factory=list)
    beta_skipped: int = 0
    samples: int = 0
    beta_support: str = "trajectory"

    @property
    def estimated_bound(self) -> float:
        """V0 / alpha, the certified upper bound on J (inf when not applicable)."""
        return self.V0 / self.alpha if self.applicable else math.inf

    def violations(self, tol: float = 1e-6) -> list[str]:
        out = []
        if self.applicable:
            if self.bound_holds is False:
                out.append(f"alpha*J={self.alpha * self.J:.9g} exceeds V0={self.V0:.9g}")
            if self.per_step_decrease and min(self.per_step_decrease) < -tol:
                out.append(f"one-step decrease margin {min(self.per_step_decrease):.3g}")
        if self.eta_chain_min and min(self.eta_chain_min) < -tol:
            out.append(f"eta-chain margin {min(self.eta_chain_min):.3g}")
        return out

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "Ntilde": self.Ntilde,
            "constraint_horizon": self.N - self.Ntilde,
            "beta": self.beta,
            "beta_support": self.beta_support,
            "alpha": self.alpha,
            "applicable": self.applicable,
            "V0": self.V0,
            "J": self.J,
            "estimated_bound": None if not self.applicable else self.estimated_bound,
            "bound_holds": self.bound_holds,
            "min_stabilizing_N": self.min_stabilizing_N,
            "samples": self.samples,
            "beta_skipped": self.beta_skipped,
            "per_step_decrease": list(self.per_step_decrease),
            "decrease_hypothesis": list(self.decrease_hypothesis),
            "eta_chain_min": list(self.eta_chain_min),
        }


def certify(
    spec: OcpSpec,
    tables: Sequence[ValueTable],
    J: float,
    *,
    tol: float = 1e-6,
    denom_tol: float = DENOM_TOL,
    beta_min: float = BETA_MIN,
) -> BoundReport:
    """Bound report from the value tables recorded at x(0), ..., x(T).

    ``tables[k + 1]`` must belong to the successor of ``tables[k]``.
    """
    rec = aggregate_beta((beta_candidates(t, denom_tol) for t in tables), beta_min)
    beta = rec.beta
    alpha = alpha_of(beta, spec.N, spec.Ntilde)
    ok = applicability(beta, spec.N, spec.Ntilde)
    N = spec.N
    decrease, hyp = [], []
    for cur, nxt in zip(tables[:-1], tables[1:]):
        l = cur.first_stage_costs[N]
        decrease.append(float(cur.values[N] - nxt.values[N] - alpha * l))
        hyp.append(float((1.0 - alpha) * l - (nxt.values[N] - nxt.values[N - 1])))
    V0 = float(tables[0].values[N])
    return BoundReport(
        N=N,
        Ntilde=spec.Ntilde,
        beta=beta,
        alpha=alpha,
        applicable=ok,
        V0=V0,
        J=float(J),
        bound_holds=(alpha * J <= V0 + tol) if ok else None,
        per_step_decrease=decrease,
        min_stabilizing_N=min_stabilizing_horizon(beta, spec.Ntilde),
        eta_chain_min=[float(lemma2_chain_check(t, beta).min()) for t in tables],
        decrease_hypothesis=hyp,
        beta_skipped=rec.skipped,
        samples=rec.T,
    )
