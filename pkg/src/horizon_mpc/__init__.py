"""Partially constrained MPC with control barrier functions and online
suboptimality certificates."""

from .cbf import AffineBarrier, AffineConstraint, BarrierSet, benchmark_barriers, verify_invariance
from .lti import DiscreteLTI, StageCost, double_integrator
from .ocp import InfeasibleOcp, OcpSpec, solve_partially_constrained, solve_tail, value_family
from .qp import QpProblem, QpSettings, Status, solve_qp
from .sim import Termination, run_closed_loop, sweep
from .subopt import alpha_of, applicability, certify, eta, min_stabilizing_horizon

__all__ = [
    "AffineBarrier", "AffineConstraint", "BarrierSet", "benchmark_barriers", "verify_invariance",
    "DiscreteLTI", "StageCost", "double_integrator",
    "InfeasibleOcp", "OcpSpec", "solve_partially_constrained", "solve_tail", "value_family",
    "QpProblem", "QpSettings", "Status", "solve_qp",
    "Termination", "run_closed_loop", "sweep",
    "alpha_of", "applicability", "certify", "eta", "min_stabilizing_horizon",
]

__version__ = "0.1.0"
