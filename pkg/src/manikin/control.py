"""Task-space PD control and null-space (posture) control.

The internal projection sends posture torques into the subspace that cannot
move the designated external port. It is built with the damping-weighted
pseudo-inverse, which makes B_a^-1 Pi^T a symmetric PSD map: posture control
then provably cannot pump energy out through that port, and the potential is
non-increasing when the port is unloaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from manikin.chain import FrameRef
from manikin.dynamics import TorqueVector
from manikin.errors import SingularMatrixError
from manikin.se3 import Transform, pose_error

SYMMETRY_TOL = 1e-12

# Singular values of the port map below this fraction of the largest are
# treated as rank-deficient when inverting (kinematic singularities must not
# produce exploding projections).
PINV_CUTOFF = 1e-10


def _check_gain(name: str, G: np.ndarray, definite: bool) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim == 0:
        G = np.eye(6) * float(G)
    elif G.ndim == 1:
        G = np.diag(G)
    if np.abs(G - G.T).max() > SYMMETRY_TOL:
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(G)
    if definite and eig.min() <= 0.0:
        raise ValueError(f"{name} must be positive definite")
    if not definite and eig.min() < -SYMMETRY_TOL:
        raise ValueError(f"{name} must be positive semi-definite")
    return G


@dataclass(frozen=True)
class TaskTarget:
    """Damped-spring attachment of one controlled frame to a desired pose."""

    frame: FrameRef
    x_d: Transform
    v_d: np.ndarray = field(default_factory=lambda: np.zeros(6))
    stiffness: np.ndarray = field(default_factory=lambda: np.eye(6) * 100.0)
    damping: np.ndarray = field(default_factory=lambda: np.eye(6) * 10.0)

    def __post_init__(self):
        object.__setattr__(self, "stiffness", _check_gain("stiffness K", self.stiffness, False))
        object.__setattr__(self, "damping", _check_gain("damping B_c", self.damping, True))
        object.__setattr__(self, "v_d", np.asarray(self.v_d, dtype=float))


def task_force(target: TaskTarget, x: Transform, v: np.ndarray) -> np.ndarray:
    """PD wrench K err(x_d, x) + B_c (v_d - v) at the controlled frame."""
    err = pose_error(target.x_d, x)
    return target.stiffness @ err + target.damping @ (target.v_d - v)


# ---------------------------------------------------------------------------
# internal (null-space) control


@dataclass(frozen=True)
class Projection:
    """Torque projector Pi^T annihilating a port: J1 B_a^-1 Pi^T = 0.

    Valid only for the (q, J1) it was built from; rebuild each step.
    """

    matrix: np.ndarray
    source_jacobian: np.ndarray


def _psd_pinv(G: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix with relative cutoff."""
    vals, vecs = np.linalg.eigh(G)
    cut = PINV_CUTOFF * max(vals[-1], 0.0)
    inv = np.where(vals > cut, 1.0 / np.where(vals > cut, vals, 1.0), 0.0)
    return vecs @ (inv[:, None] * vecs.T)


def build_internal_projection(J1: np.ndarray, B_a: np.ndarray) -> Projection:
    """Pi^T = I - J1^T (J1 B_a^-1 J1^T)^+ J1 B_a^-1.

    This is the projector onto Ker(J1 B_a^-1) that is orthogonal in the
    B_a^-1/2-whitened coordinates; equivalently the transposed
    damping-weighted pseudo-inverse construction. It is idempotent,
    annihilates the port velocity map, and makes B_a^-1 Pi^T symmetric PSD.
    """
    J1 = np.atleast_2d(np.asarray(J1, dtype=float))
    n = B_a.shape[0]
    try:
        Binv_Jt = np.linalg.solve(B_a, J1.T)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("projection needs invertible damping B_a") from None
    G = J1 @ Binv_Jt  # port mobility J1 B_a^-1 J1^T, symmetric PSD
    Pi = np.eye(n) - J1.T @ _psd_pinv(0.5 * (G + G.T)) @ Binv_Jt.T
    return Projection(Pi, J1)


def internal_torque(potential, proj: Projection, q: np.ndarray) -> TorqueVector:
    """Projected gradient-descent torque: -alpha Pi^T dU/dq."""
    g = np.asarray(potential.gradient(q), dtype=float)
    return TorqueVector(-potential.alpha * (proj.matrix @ g), source="internal")


def self_projectivity_residual(potential, proj: Projection, q: np.ndarray) -> float:
    """Relative change of the potential gradient under the projection.

    Zero means the projection costs nothing at q: the potential already acts
    inside the port's null space.
    """
    g = np.asarray(potential.gradient(q), dtype=float)
    return float(np.linalg.norm(proj.matrix @ g - g) / max(np.linalg.norm(g), 1e-15))


@dataclass(frozen=True)
class InternalPotential:
    """Scalar posture potential with its gradient and overall gain alpha."""

    evaluate: object  # q -> float (J)
    gradient: object  # q -> n-vector (N m)
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")


def quadratic_posture_potential(q_ref: np.ndarray, weights, alpha: float = 1.0) -> InternalPotential:
    """U(q) = 1/2 (q - q_ref)^T diag(w) (q - q_ref), the default posture pull."""
    q_ref = np.asarray(q_ref, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.ndim == 0:
        w = np.full_like(q_ref, float(w))
    if np.any(w < 0.0):
        raise ValueError("posture weights must be non-negative")

    def evaluate(q):
        d = np.asarray(q, dtype=float) - q_ref
        return 0.5 * float(d @ (w * d))

    def gradient(q):
        return w * (np.asarray(q, dtype=float) - q_ref)

    return InternalPotential(evaluate, gradient, alpha)
