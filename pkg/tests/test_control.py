import numpy as np
import pytest

from helpers import planar_chain, random_chain, random_state, spd

from manikin import chain as chain_mod
from manikin.chain import FrameRef
from manikin.control import (
    InternalPotential,
    TaskTarget,
    build_internal_projection,
    internal_torque,
    quadratic_posture_potential,
    self_projectivity_residual,
    task_force,
)
from manikin.errors import SingularMatrixError
from manikin.se3 import Transform, pose_error, rot_exp


def _target(x_d, K=None, B_c=None, v_d=None):
    return TaskTarget(
        FrameRef(0),
        x_d,
        v_d=np.zeros(6) if v_d is None else v_d,
        stiffness=np.eye(6) * 100.0 if K is None else K,
        damping=np.eye(6) * 10.0 if B_c is None else B_c,
    )


def test_task_force_converged_is_zero():
    x = Transform.from_rpy([0.2, -0.1, 0.4], [1, 2, 3])
    v = np.array([0.1, 0, 0, 0, 0.2, 0])
    target = _target(x, v_d=v)
    assert np.abs(task_force(target, x, v)).max() == 0.0


def test_task_force_pure_stiffness():
    x = Transform.identity()
    x_d = Transform(np.eye(3), np.array([0.1, 0, 0]))
    target = _target(x_d, K=np.eye(6) * 10.0, B_c=np.eye(6) * 1e-12)
    f = task_force(target, x, np.zeros(6))
    assert np.allclose(f, [1.0, 0, 0, 0, 0, 0], atol=1e-12)


def test_task_force_pure_damping():
    x = Transform.identity()
    target = _target(x, K=np.zeros((6, 6)), B_c=np.eye(6) * 5.0,
                     v_d=np.array([0, 2.0, 0, 0, 0, 0]))
    f = task_force(target, x, np.zeros(6))
    assert np.allclose(f, [0, 10.0, 0, 0, 0, 0])


def test_task_force_is_negative_gradient_of_pose_potential(rng):
    # K-part of the wrench equals -dU/dx for U = 1/2 err^T K err, with
    # isotropic rotation stiffness; checked by finite differences.
    K = np.diag([120.0, 80.0, 60.0, 7.0, 7.0, 7.0])
    x_d = Transform.from_rpy([0.4, -0.2, 0.3], [0.5, -0.1, 0.2])
    x = Transform.from_rpy([0.1, 0.3, -0.2], [0.3, 0.2, -0.4])
    target = _target(x_d, K=K, B_c=np.eye(6) * 1e-14)

    def U(xx):
        e = pose_error(x_d, xx)
        return 0.5 * float(e @ K @ e)

    f = task_force(target, x, np.zeros(6))
    eps = 1e-6
    grad = np.zeros(6)
    for i in range(6):
        d = np.zeros(6)
        d[i] = eps
        xp = Transform(rot_exp(d[3:6]) @ x.R, x.p + d[0:3])
        xm = Transform(rot_exp(-d[3:6]) @ x.R, x.p - d[0:3])
        grad[i] = (U(xp) - U(xm)) / (2 * eps)
    assert np.abs(f + grad).max() < 1e-5


def test_gain_validation():
    with pytest.raises(ValueError):
        _target(Transform.identity(), K=np.diag([1, 1, 1, 1, 1, -0.1]))
    with pytest.raises(ValueError):
        _target(Transform.identity(), B_c=np.zeros((6, 6)))  # damping must be PD
    asym = np.eye(6)
    asym[0, 1] = 1e-6
    with pytest.raises(ValueError):
        _target(Transform.identity(), K=asym)


# -- projection ------------------------------------------------------------


def test_projection_no_task_is_identity():
    proj = build_internal_projection(np.zeros((6, 4)), np.eye(4))
    assert np.abs(proj.matrix - np.eye(4)).max() < 1e-12


def test_projection_full_rank_annihilates_everything(rng):
    J1 = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    proj = build_internal_projection(J1, np.diag([1.0, 2.0, 3.0, 4.0]))
    assert np.abs(proj.matrix).max() < 1e-10


def test_projection_invariants_random(rng):
    for _ in range(40):
        n = int(rng.integers(3, 9))
        m = int(rng.integers(1, 7))
        J1 = rng.standard_normal((m, n))
        B = spd(rng, n) if rng.random() < 0.5 else np.diag(rng.uniform(0.5, 8.0, n))
        proj = build_internal_projection(J1, B)
        Pi = proj.matrix
        Binv = np.linalg.inv(B)
        assert np.abs(Pi @ Pi - Pi).max() < 1e-10
        assert np.abs(J1 @ Binv @ Pi).max() < 1e-10
        sym = 0.5 * (Binv @ Pi + (Binv @ Pi).T)
        assert np.linalg.eigvalsh(sym).min() >= -1e-10


def test_projection_spec_instance(rng):
    J1 = rng.standard_normal((6, 8))
    B = np.diag(np.arange(1.0, 9.0))
    proj = build_internal_projection(J1, B)
    Binv = np.linalg.inv(B)
    assert np.linalg.norm(J1 @ Binv @ proj.matrix) < 1e-10
    sym = 0.5 * (Binv @ proj.matrix + (Binv @ proj.matrix).T)
    assert np.linalg.eigvalsh(sym).min() >= -1e-10


def test_projection_singular_damping():
    with pytest.raises(SingularMatrixError):
        build_internal_projection(np.ones((1, 2)), np.zeros((2, 2)))


def test_projection_rank_deficient_port(rng):
    # duplicated rows: the pseudo-inverse cutoff must keep things finite
    row = rng.standard_normal(5)
    J1 = np.vstack([row, row, 2 * row])
    B = np.diag(rng.uniform(0.5, 3.0, 5))
    proj = build_internal_projection(J1, B)
    assert np.isfinite(proj.matrix).all()
    assert np.abs(J1 @ np.linalg.inv(B) @ proj.matrix).max() < 1e-10


# -- internal torque ---------------------------------------------------------


def _const_potential(g, alpha=1.0):
    g = np.asarray(g, dtype=float)
    return InternalPotential(lambda q: float(g @ q), lambda q: g, alpha)


def test_internal_torque_zero_alpha(rng):
    J1 = rng.standard_normal((3, 5))
    proj = build_internal_projection(J1, np.eye(5))
    tau = internal_torque(_const_potential(rng.standard_normal(5), alpha=0.0), proj, np.zeros(5))
    assert np.abs(tau.values).max() == 0.0
    assert tau.source == "internal"


def test_internal_torque_annihilated_gradient(rng):
    # gradients inside the port's row space are projected out entirely
    J1 = rng.standard_normal((3, 6))
    B = np.diag(rng.uniform(0.5, 4.0, 6))
    proj = build_internal_projection(J1, B)
    g = J1.T @ rng.standard_normal(3)
    tau = internal_torque(_const_potential(g), proj, np.zeros(6))
    assert np.linalg.norm(tau.values) < 1e-9


def test_internal_torque_identity_projection():
    proj = build_internal_projection(np.zeros((6, 2)), np.eye(2))
    tau = internal_torque(_const_potential([1.0, 2.0]), proj, np.zeros(2))
    assert np.allclose(tau.values, [-1.0, -2.0])


# -- self-projectivity --------------------------------------------------------


def test_self_projectivity_kernel_gradient(rng):
    J1 = rng.standard_normal((2, 6))
    B = np.diag(rng.uniform(0.5, 4.0, 6))
    A = J1 @ np.linalg.inv(B)
    _, _, Vt = np.linalg.svd(A)
    g = Vt[2:].T @ rng.standard_normal(4)
    proj = build_internal_projection(J1, B)
    assert self_projectivity_residual(_const_potential(g), proj, np.zeros(6)) < 1e-10


def test_self_projectivity_annihilated_gradient(rng):
    J1 = rng.standard_normal((2, 6))
    B = np.diag(rng.uniform(0.5, 4.0, 6))
    g = J1.T @ rng.standard_normal(2)
    proj = build_internal_projection(J1, B)
    res = self_projectivity_residual(_const_potential(g), proj, np.zeros(6))
    assert abs(res - 1.0) < 1e-10


def test_self_projectivity_no_port():
    proj = build_internal_projection(np.zeros((6, 3)), np.eye(3))
    res = self_projectivity_residual(_const_potential([1.0, -2.0, 0.5]), proj, np.zeros(3))
    assert res == 0.0


# -- module invariants ---------------------------------------------------------


def test_non_disturbance_and_one_port_passivity(rng):
    # Eq. 12 setting: arbitrary external wrench at port 1, projected posture
    # torque; the port velocity ignores the internal control entirely.
    for _ in range(25):
        n = int(rng.integers(3, 8))
        J1 = rng.standard_normal((min(6, n - 1), n))
        B = spd(rng, n)
        Binv = np.linalg.inv(B)
        proj = build_internal_projection(J1, B)
        g = rng.standard_normal(n)
        g /= np.linalg.norm(g)
        gamma_int = -1.7 * (proj.matrix @ g)
        assert np.linalg.norm(J1 @ Binv @ gamma_int) < 1e-9
        W1 = rng.standard_normal(J1.shape[0])
        W1 /= np.linalg.norm(W1)
        qdot = Binv @ (J1.T @ W1 + gamma_int)
        assert float(W1 @ (J1 @ qdot)) >= -1e-12


def test_internal_descent_along_trajectory(rng):
    # open-loop posture control with zero port wrench: U never increases
    ch = random_chain(rng, 5)
    state = random_state(rng, ch)
    J1 = chain_mod.frame_jacobian(ch, state, 4, [0.1, 0.2, 0.0])[0:3]
    q_ref = state.q + rng.uniform(-1.0, 1.0, ch.nq)
    pot = quadratic_posture_potential(q_ref, rng.uniform(0.5, 2.0, ch.nq), alpha=2.0)
    u_prev = pot.evaluate(state.q)
    for _ in range(300):
        J1 = chain_mod.frame_jacobian(ch, state, 4, [0.1, 0.2, 0.0])[0:3]
        proj = build_internal_projection(J1, ch.damping)
        tau = internal_torque(pot, proj, state.q)
        qdot = np.linalg.solve(ch.damping, tau.values)
        state = chain_mod.integrate(ch, state, qdot, 0.01)
        u_now = pot.evaluate(state.q)
        assert u_now <= u_prev + 1e-12
        u_prev = u_now


def test_quadratic_potential_gradient_fd(rng):
    q_ref = rng.standard_normal(5)
    w = rng.uniform(0.1, 3.0, 5)
    pot = quadratic_posture_potential(q_ref, w)
    q = rng.standard_normal(5)
    g = pot.gradient(q)
    eps = 1e-6
    for i in range(5):
        d = np.zeros(5)
        d[i] = eps
        fd = (pot.evaluate(q + d) - pot.evaluate(q - d)) / (2 * eps)
        assert abs(fd - g[i]) < 1e-5
