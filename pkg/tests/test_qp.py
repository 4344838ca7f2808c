import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from horizon_mpc.qp import (
    QpError,
    QpProblem,
    QpSettings,
    SingularKkt,
    Status,
    solve_equality_kkt,
    solve_qp,
)
from oracles import enumerate_active_sets


def random_qp(rng, d=None, q=None):
    d = int(rng.integers(1, 7)) if d is None else d
    q = int(rng.integers(0, 11)) if q is None else q
    M = rng.normal(size=(d, d))
    H = M @ M.T + 0.1 * np.eye(d)
    g = 3 * rng.normal(size=d)
    G = rng.normal(size=(q, d))
    h = rng.normal(size=q)
    return H, g, G, h


def test_lower_bound_example():
    sol = solve_qp(QpProblem([[2.0]], [0.0], [[-1.0]], [-1.0]))
    assert sol.status is Status.OPTIMAL
    assert sol.z == pytest.approx([1.0], abs=1e-8)
    assert sol.value == pytest.approx(1.0, abs=1e-8)


def test_box_example():
    sol = solve_qp(QpProblem([[2.0]], [-6.0], [[1.0], [-1.0]], [2.0, 2.0]))
    assert sol.z == pytest.approx([2.0], abs=1e-8)
    assert sol.value == pytest.approx(-8.0, abs=1e-8)


def test_unconstrained():
    sol = solve_qp(QpProblem(np.diag([2.0, 4.0]), [-2.0, 4.0]))
    assert sol.optimal
    assert sol.z == pytest.approx([1.0, -1.0])


def test_infeasible_detected():
    # z <= -1 and z >= 1
    sol = solve_qp(QpProblem([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0]))
    assert sol.status is Status.INFEASIBLE


def test_non_pd_hessian_rejected():
    with pytest.raises(QpError):
        QpProblem([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
    with pytest.raises(QpError):
        QpProblem([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])


def test_max_iterations_status():
    rng = np.random.default_rng(5)
    H, g, G, h = random_qp(rng, d=6, q=10)
    s = QpSettings(max_iter=2, check_every=1, polish=False)
    sol = solve_qp(QpProblem(H, g, G, h), s)
    assert sol.status in (Status.MAX_ITERATIONS, Status.INFEASIBLE, Status.OPTIMAL)
    if sol.status is Status.MAX_ITERATIONS:
        assert sol.z.shape == (6,)
        assert np.all(np.isfinite(sol.z))


def test_six_dim_eight_constraints_matches_oracle():
    rng = np.random.default_rng(11)
    matched = 0
    while matched < 5:
        H, g, G, h = random_qp(rng, d=6, q=8)
        ref, _ = enumerate_active_sets(H, g, G, h)
        if ref is None:
            continue
        sol = solve_qp(QpProblem(H, g, G, h))
        assert sol.optimal
        assert sol.value == pytest.approx(ref, abs=1e-6)
        matched += 1


def test_oracle_equivalence_many():
    rng = np.random.default_rng(2024)
    n_feasible = 0
    for _ in range(300):
        H, g, G, h = random_qp(rng)
        ref, _ = enumerate_active_sets(H, g, G, h)
        sol = solve_qp(QpProblem(H, g, G, h))
        assert (ref is None) == (sol.status is Status.INFEASIBLE)
        if ref is not None:
            n_feasible += 1
            assert sol.optimal
            assert sol.value == pytest.approx(ref, abs=1e-6)
    assert n_feasible > 150


def test_kkt_conditions_hold():
    rng = np.random.default_rng(7)
    s = QpSettings()
    checked = 0
    for _ in range(80):
        H, g, G, h = random_qp(rng)
        sol = solve_qp(QpProblem(H, g, G, h), s)
        if not sol.optimal:
            continue
        z, lam = sol.z, sol.multipliers
        scale = 1 + max(np.abs(H @ z).max(), np.abs(g).max(), np.abs(G.T @ lam).max(initial=0))
        assert np.abs(H @ z + g + G.T @ lam).max() <= 1e-7 * scale
        if G.shape[0]:
            slack = G @ z - h
            assert slack.max() <= 1e-7
            assert lam.min() >= -1e-9
            assert np.abs(lam * slack).max() <= 1e-7 * scale
        checked += 1
    assert checked > 40


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_adding_constraint_never_lowers_value(seed):
    rng = np.random.default_rng(seed)
    H, g, G, h = random_qp(rng, q=int(rng.integers(1, 8)))
    # keep everything feasible by anchoring at a point
    z0 = rng.normal(size=g.size)
    h = G @ z0 + np.abs(h)
    vals = []
    for k in range(G.shape[0] + 1):
        vals.append(solve_qp(QpProblem(H, g, G[:k], h[:k])).value)
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))


def test_equality_kkt_examples():
    assert solve_equality_kkt(np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0]) == pytest.approx([1, 1])
    assert solve_equality_kkt(np.diag([1.0, 4.0]), np.zeros(2), [[1.0, 1.0]], [5.0]) == pytest.approx([4, 1])
    assert solve_equality_kkt([[2.0]], [-4.0]) == pytest.approx([2.0])


def test_equality_kkt_multipliers():
    z, lam = solve_equality_kkt(np.diag([1.0, 4.0]), np.zeros(2), [[1.0, 1.0]], [5.0],
                                return_multipliers=True)
    assert np.diag([1.0, 4.0]) @ z + np.array([1.0, 1.0]) * lam[0] == pytest.approx([0, 0])


def test_equality_kkt_singular():
    with pytest.raises(SingularKkt):
        solve_equality_kkt(np.eye(2), np.zeros(2), [[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0])
    with pytest.raises(SingularKkt):
        solve_equality_kkt(np.eye(1), np.zeros(1), [[1.0], [1.0]], [1.0, 1.0])
