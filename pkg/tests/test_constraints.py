import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import enumerate_lcp, planar_chain, random_chain, random_state, spd

from manikin import chain as chain_mod
from manikin.chain import CollisionPoint, JointSpec, KinematicChain, LinkSpec, SimState
from manikin.constraints import (
    HalfSpace,
    Sphere,
    UnilateralConstraint,
    assemble_lcp,
    constraint_torques,
    detect_constraints,
    solve_lcp,
)
from manikin.dynamics import SystemFactor
from manikin.errors import ConfigurationError, LcpConvergenceError


def _probe_chain(n=2):
    ch = planar_chain(n)
    return KinematicChain(
        ch.joints, ch.links, ch.damping,
        collision_points=[CollisionPoint(n - 1, np.array([1.0, 0, 0]), "tip")],
    )


def test_obstacle_validation():
    with pytest.raises(ConfigurationError):
        HalfSpace(np.array([0, 0, 2.0]), 0.0)
    with pytest.raises(ConfigurationError):
        Sphere(np.zeros(3), -1.0)


def test_detect_far_probe_not_returned():
    ch = _probe_chain()
    floor = HalfSpace(np.array([0.0, 0.0, 1.0]), -1.0, "floor")  # 1 m below
    cons = detect_constraints(ch, ch.neutral_state(), [floor], activation_margin=0.01)
    assert cons == []


def test_detect_joint_limit_gap():
    ch = KinematicChain(
        [JointSpec("revolute", [0, 0, 1])], [LinkSpec(-1)], 1.0, limits=[(-1.0, 1.0)]
    )
    cons = detect_constraints(ch, SimState(np.array([1.0 - 1e-4])), (), activation_margin=1e-3)
    assert len(cons) == 1
    assert cons[0].kind == "joint_limit_upper"
    assert cons[0].gap == pytest.approx(1e-4)
    assert np.array_equal(cons[0].row, [-1.0])


def test_detect_contact_gap_and_row_fd(rng):
    # probe above the plane z = 0: gap is the height; row matches the
    # finite-difference derivative of the gap
    ch = _probe_chain(3)
    plane = HalfSpace(np.array([0.0, 0.0, 1.0]), 0.0, "floor")
    state = SimState(rng.uniform(-0.8, 0.8, 3))
    cons = detect_constraints(ch, state, [plane], activation_margin=100.0)
    assert len(cons) == 1
    c = cons[0]
    tip = chain_mod.forward_kinematics(ch, state)[2].apply(np.array([1.0, 0, 0]))
    assert c.gap == pytest.approx(tip[2])
    eps = 1e-7
    for i in range(3):
        d = np.zeros(3)
        d[i] = eps
        gp = chain_mod.forward_kinematics(ch, chain_mod.retract(ch, state, d))[2].apply(
            np.array([1.0, 0, 0]))[2]
        gm = chain_mod.forward_kinematics(ch, chain_mod.retract(ch, state, -d))[2].apply(
            np.array([1.0, 0, 0]))[2]
        assert abs((gp - gm) / (2 * eps) - c.row[i]) < 1e-6


def test_detect_sphere_gap(rng):
    ch = _probe_chain(2)
    ball = Sphere(np.array([2.0, 0.5, 0.0]), 0.3, "ball")
    state = ch.neutral_state()
    cons = detect_constraints(ch, state, [ball], activation_margin=10.0)
    assert len(cons) == 1
    dist = np.linalg.norm(np.array([2.0, 0.0, 0.0]) - ball.center) - 0.3
    assert cons[0].gap == pytest.approx(dist)


def test_assemble_empty():
    M, w = assemble_lcp([], SystemFactor(np.eye(2)), np.zeros(2), 0.01)
    assert M.shape == (0, 0) and w.shape == (0,)


def test_assemble_analytic_single_contact():
    factor = SystemFactor(np.eye(2))
    c = UnilateralConstraint("point_contact", "c", 0.0, np.array([1.0, 0.0]))
    M, w = assemble_lcp([c], factor, np.array([-1.0, 0.0]), dt=0.01)
    assert M[0, 0] == pytest.approx(1.0, abs=1e-5)
    assert w[0] == pytest.approx(-1.0)
    sol = solve_lcp(M, w)
    assert sol.f[0] == pytest.approx(1.0, abs=1e-5)
    assert abs(sol.slack[0]) < 1e-9
    assert sol.residual < 1e-10


def test_assemble_psd(rng):
    for _ in range(20):
        n = 5
        S = spd(rng, n)
        factor = SystemFactor(S)
        cons = [
            UnilateralConstraint("point_contact", f"c{i}", rng.uniform(-0.1, 0.1),
                                 rng.standard_normal(n))
            for i in range(int(rng.integers(1, 5)))
        ]
        M, _ = assemble_lcp(cons, factor, rng.standard_normal(n), 0.01)
        assert np.linalg.eigvalsh(M).min() >= -1e-10


def test_assemble_stabilization_terms():
    factor = SystemFactor(np.eye(1))
    row = np.array([1.0])
    # separated: may close at most gap/dt
    c = UnilateralConstraint("point_contact", "c", 0.02, row)
    _, w = assemble_lcp([c], factor, np.array([0.0]), dt=0.01)
    assert w[0] == pytest.approx(2.0)
    # penetrated: pushed out at gamma * depth / dt, capped
    c = UnilateralConstraint("point_contact", "c", -0.01, row)
    _, w = assemble_lcp([c], factor, np.array([0.0]), dt=0.01, gamma=0.2)
    assert w[0] == pytest.approx(-0.2)
    c = UnilateralConstraint("point_contact", "c", -5.0, row)
    _, w = assemble_lcp([c], factor, np.array([0.0]), dt=0.01, gamma=0.2, recovery_cap=1.0)
    assert w[0] == pytest.approx(-1.0)


def test_solve_separation():
    sol = solve_lcp(np.eye(3), np.array([0.5, 0.0, 2.0]))
    assert np.array_equal(sol.f, np.zeros(3))


def test_solve_analytic_two_constraints():
    sol = solve_lcp(np.eye(2), np.array([-1.0, 2.0]))
    assert np.allclose(sol.f, [1.0, 0.0], atol=1e-10)
    assert sol.residual < 1e-10


def test_solve_matches_enumeration_seeded(rng):
    for _ in range(300):
        m = int(rng.integers(1, 5))
        A = rng.standard_normal((m, m))
        M = A @ A.T + 0.05 * np.eye(m)
        w = 2.0 * rng.standard_normal(m)
        sol = solve_lcp(M, w, tol=1e-12, max_iter=5000)
        assert np.abs(sol.f - enumerate_lcp(M, w)).max() < 1e-8
        assert np.abs(sol.f * sol.slack).max() < 1e-8
        assert sol.slack.min() > -1e-8
        assert sol.f.min() >= 0.0


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_solve_matches_enumeration_hypothesis(data):
    m = data.draw(st.integers(1, 4))
    entries = data.draw(
        st.lists(st.floats(-2, 2, allow_nan=False), min_size=m * m, max_size=m * m)
    )
    wlist = data.draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=m, max_size=m))
    A = np.array(entries).reshape(m, m)
    M = A @ A.T + 0.1 * np.eye(m)
    w = np.array(wlist)
    sol = solve_lcp(M, w, tol=1e-12, max_iter=5000)
    assert np.abs(sol.f - enumerate_lcp(M, w)).max() < 1e-8


def test_solve_infeasible_raises_with_residual():
    # zero row with negative free slack: no solution exists
    M = np.array([[0.0, 0.0], [0.0, 1.0]])
    w = np.array([-1.0, -1.0])
    with pytest.raises(LcpConvergenceError) as err:
        solve_lcp(M, w, tol=1e-10, max_iter=50)
    assert err.value.residual >= 1.0
    assert err.value.iterations == 50


def test_constraint_torques_zero_and_transpose():
    c1 = UnilateralConstraint("point_contact", "a", 0.0, np.array([1.0, 0.0]))
    from manikin.constraints import ContactSolution

    zero = ContactSolution(np.array([0.0]), np.array([0.0]), 0.0)
    assert np.array_equal(constraint_torques([c1], zero).values, [0.0, 0.0])
    sol = ContactSolution(np.array([3.0]), np.array([0.0]), 0.0)
    tau = constraint_torques([c1], sol)
    assert np.array_equal(tau.values, [3.0, 0.0])
    assert tau.source == "constraint"


def test_contact_power_neutral_at_zero_gap(rng):
    # with the gap exactly closed both stabilization terms vanish, so the
    # contact power equals f * slack, which complementarity pins at zero
    for _ in range(50):
        n = 4
        S = spd(rng, n)
        factor = SystemFactor(S)
        cons = [UnilateralConstraint("point_contact", "c", 0.0, rng.standard_normal(n))]
        free = rng.standard_normal(n)
        M, w = assemble_lcp(cons, factor, free, dt=0.01, regularization=0.0)
        sol = solve_lcp(M, w)
        qdot = free + factor.solve(constraint_torques(cons, sol, n).values)
        for c, fi in zip(cons, sol.f):
            assert fi * float(c.row @ qdot) >= -1e-8


def test_contact_power_bound_with_regularization(rng):
    # the mobility floor acts as a tiny compliance: extraction per constraint
    # is bounded by reg * f^2
    reg = 1e-6
    for _ in range(30):
        n = 4
        factor = SystemFactor(spd(rng, n))
        cons = [UnilateralConstraint("point_contact", "c", 0.0, rng.standard_normal(n))]
        free = rng.standard_normal(n)
        M, w = assemble_lcp(cons, factor, free, dt=0.01, regularization=reg)
        sol = solve_lcp(M, w)
        qdot = free + factor.solve(constraint_torques(cons, sol, n).values)
        fi = sol.f[0]
        assert fi * float(cons[0].row @ qdot) >= -(reg * fi * fi + 1e-8)


def test_contact_port_near_neutral_over_trace():
    # sustained resting contact: the port's only energy exchange is the
    # micro-gap closing bias, negligible against the task inflow
    from manikin.scenario import bundled_scenario_path, load_scenario
    from manikin.world import World

    world = World(load_scenario(bundled_scenario_path("table_lean")))
    world.run()
    touching = sum(
        1 for _, powers, _ in world.ledger.history if "contact:hand/table" in powers
    )
    assert touching > 400  # sustained contact actually happened
    e_contact = world.ledger.energies["contact:hand/table"]
    e_task = world.ledger.energies["task:hand"]
    assert abs(e_contact) < 1e-3 * abs(e_task)
