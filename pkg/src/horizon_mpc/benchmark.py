"""Planar double-integrator obstacle-avoidance benchmark."""

from __future__ import annotations

import numpy as np

from .cbf import benchmark_barriers
from .lti import StageCost, double_integrator
from .ocp import OcpSpec
from .qp import QpSettings

X0 = np.array([-0.8, 0.6, -0.45, 0.65])
DEFAULT_DT = 0.35
GAMMA = 0.8
INPUT_LIMIT = 2.0
VELOCITY_LIMIT = 2.0

# Published reference closed-loop costs (weights and sampling time unknown);
# kept for side-by-side display only.
REFERENCE_COSTS = {
    (6, 1): 143.4820, (6, 3): 126.5533, (6, 5): 126.4878,
    (13, 1): 139.5191, (13, 3): 126.4512, (13, 5): 126.4298,
    (13, 7): 126.4298, (13, 9): 126.4298,
    (20, 1): 138.9538, (20, 3): 126.4462, (20, 5): 126.4295,
    (20, 7): 126.4294, (20, 9): 126.4294,
}


def benchmark_spec(
    N: int = 20,
    Ntilde: int = 10,
    dt: float = DEFAULT_DT,
    Q=None,
    R=None,
    gamma: float = GAMMA,
    qp_settings: QpSettings | None = None,
) -> OcpSpec:
    sys = double_integrator(dt)
    cost = StageCost(np.eye(4) if Q is None else Q, np.eye(2) if R is None else R)
    return OcpSpec(
        sys=sys,
        cost=cost,
        N=N,
        Ntilde=Ntilde,
        u_min=np.full(2, -INPUT_LIMIT),
        u_max=np.full(2, INPUT_LIMIT),
        barriers=benchmark_barriers(gamma, VELOCITY_LIMIT),
        qp_settings=qp_settings or QpSettings(),
    )
