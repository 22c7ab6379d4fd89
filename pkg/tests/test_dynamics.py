import numpy as np
import pytest

from helpers import planar_chain, random_chain, random_state

from manikin.chain import JointSpec, KinematicChain, LinkSpec
from manikin.dynamics import (
    TaskChannel,
    TorqueVector,
    assemble_system,
    solve_velocity_explicit,
    solve_velocity_implicit,
)
from manikin.errors import NumericalFaultError, SingularMatrixError


def scalar_chain(damping):
    return KinematicChain(
        [JointSpec("prismatic", [1, 0, 0])], [LinkSpec(-1)], damping
    )


def chan(J, k_err, B_c, v_d=None):
    J = np.atleast_2d(np.asarray(J, dtype=float))
    m = J.shape[0]
    return TaskChannel(
        J,
        np.atleast_1d(np.asarray(k_err, dtype=float)),
        np.eye(m) * B_c if np.isscalar(B_c) else np.asarray(B_c, dtype=float),
        np.zeros(m) if v_d is None else np.atleast_1d(np.asarray(v_d, dtype=float)),
    )


def test_explicit_rest():
    ch = planar_chain(3, damping=2.0)
    qdot = solve_velocity_explicit(ch, [TorqueVector(np.zeros(3))])
    assert np.array_equal(qdot, np.zeros(3))


def test_explicit_scalar():
    qdot = solve_velocity_explicit(scalar_chain(2.0), [TorqueVector([4.0])])
    assert qdot[0] == pytest.approx(2.0, abs=1e-15)


def test_explicit_diagonal():
    ch = KinematicChain(
        [JointSpec("prismatic", [1, 0, 0]), JointSpec("prismatic", [0, 1, 0])],
        [LinkSpec(-1), LinkSpec(0)],
        np.array([1.0, 2.0]),
    )
    qdot = solve_velocity_explicit(ch, [TorqueVector([1.0, 1.0])])
    assert np.allclose(qdot, [1.0, 0.5])


def test_explicit_sums_sources():
    ch = scalar_chain(1.0)
    qdot = solve_velocity_explicit(
        ch, [TorqueVector([1.0], "task"), TorqueVector([2.0], "constraint")]
    )
    assert qdot[0] == pytest.approx(3.0)


def test_explicit_singular_damping():
    with pytest.raises(SingularMatrixError) as err:
        solve_velocity_explicit(scalar_chain(0.0), [TorqueVector([1.0])])
    assert "implicit" in str(err.value)


def test_explicit_linearity(rng):
    ch = random_chain(rng, 5)
    tau = rng.standard_normal(5)
    a = solve_velocity_explicit(ch, [TorqueVector(tau)])
    b = solve_velocity_explicit(ch, [TorqueVector(2 * tau)])
    assert np.abs(b - 2 * a).max() <= 1e-12 * np.abs(b).max()


def test_torque_vector_validation():
    with pytest.raises(NumericalFaultError):
        TorqueVector([np.inf, 0.0])
    with pytest.raises(ValueError):
        TorqueVector([0.0], source="mystery")


def test_implicit_target_reached():
    ch = scalar_chain(1.0)
    report = solve_velocity_implicit(ch, [chan([[1.0]], 0.0, 1.0)])
    assert report.solvable
    assert np.array_equal(report.qdot, np.zeros(1))


def test_implicit_scalar_resolvent():
    # B_a = 1, J = 1, K = 1, B_c = 1, dx = 1, v_d = 0 -> qdot = 0.5
    report = solve_velocity_implicit(scalar_chain(1.0), [chan([[1.0]], 1.0, 1.0)])
    assert report.qdot[0] == pytest.approx(0.5, abs=1e-15)


def test_implicit_semidefinite_damping_full_rank_port():
    # B_a = 0 is fine when the task port has full rank and definite damping
    report = solve_velocity_implicit(scalar_chain(0.0), [chan([[1.0]], 2.0, 1.0)])
    assert report.solvable
    assert report.qdot[0] == pytest.approx(2.0, abs=1e-15)


def test_implicit_singular_reports_unsolvable():
    ch = KinematicChain(
        [JointSpec("prismatic", [1, 0, 0]), JointSpec("prismatic", [0, 1, 0])],
        [LinkSpec(-1), LinkSpec(0)],
        np.zeros((2, 2)),
    )
    # port only spans the first coordinate; the second row stays singular
    report = solve_velocity_implicit(ch, [chan([[1.0, 0.0]], 1.0, 1.0)])
    assert not report.solvable
    assert report.system_matrix_condition == np.inf
    assert np.array_equal(report.qdot, np.zeros(2))


def test_system_matrix_symmetry(rng):
    ch = random_chain(rng, 6)
    channels = []
    for _ in range(3):
        J = rng.standard_normal((6, 6))
        B = rng.standard_normal((6, 6))
        B = B @ B.T + 0.5 * np.eye(6)
        channels.append(chan(J, rng.standard_normal(6), B, rng.standard_normal(6)))
    S, _ = assemble_system(ch, channels)
    assert np.abs(S - S.T).max() < 1e-12


def test_implicit_matches_explicit_as_damping_vanishes(rng):
    ch = random_chain(rng, 4)
    state = random_state(rng, ch)
    from manikin.chain import frame_jacobian

    J = frame_jacobian(ch, state, 3, [0.2, 0, 0])
    K_err = rng.standard_normal(6)
    implicit = solve_velocity_implicit(ch, [chan(J, K_err, 1e-8 * np.eye(6))])
    explicit = solve_velocity_explicit(ch, [TorqueVector(J.T @ K_err)])
    rel = np.abs(implicit.qdot - explicit).max() / np.abs(explicit).max()
    assert rel < 1e-4


def test_implicit_external_torques_enter_rhs():
    ch = scalar_chain(2.0)
    report = solve_velocity_implicit(ch, [], external_torques=[TorqueVector([4.0])])
    assert report.qdot[0] == pytest.approx(2.0)
