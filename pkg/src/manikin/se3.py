"""Rigid transforms, rotation maps and their differentials.

Conventions used everywhere in the package:

* quaternions are (w, x, y, z), unit norm, representing world-from-body;
* twists are 6-vectors (linear; angular) in world coordinates;
* wrenches are 6-vectors (force; torque) in world coordinates, so that
  ``wrench @ twist`` is power in watts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Below this rotation angle the closed-form sin/cos ratios are replaced by
# their Taylor series to avoid 0/0.
SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# ---------------------------------------------------------------------------
# quaternions


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method: pick the largest of the four squared components."""
    tr = np.trace(R)
    cand = np.array(
        [1.0 + tr, 1.0 + 2.0 * R[0, 0] - tr, 1.0 + 2.0 * R[1, 1] - tr, 1.0 + 2.0 * R[2, 2] - tr]
    )
    case = int(np.argmax(cand))
    s = np.sqrt(max(cand[case], 0.0))
    if case == 0:
        q = np.array([s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif case == 1:
        q = np.array([(R[2, 1] - R[1, 2]) / s, s, (R[1, 0] + R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s])
    elif case == 2:
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[1, 0] + R[0, 1]) / s, s, (R[2, 1] + R[1, 2]) / s])
    else:
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] + R[1, 2]) / s, s])
    q *= 0.5
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_exp(omega: np.ndarray) -> np.ndarray:
    """Unit quaternion rotating by the vector ``omega`` (angle = its norm)."""
    theta = np.linalg.norm(omega)
    half = 0.5 * theta
    if theta < SMALL_ANGLE:
        # sin(t/2)/t = 1/2 - t^2/48 + ...
        k = 0.5 - theta * theta / 48.0
    else:
        k = np.sin(half) / theta
    return quat_normalize(np.array([np.cos(half), k * omega[0], k * omega[1], k * omega[2]]))


# ---------------------------------------------------------------------------
# SO(3) log / exp differentials


def rot_exp(omega: np.ndarray) -> np.ndarray:
    return quat_to_rot(quat_exp(omega))


def rot_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of R, robust near 0 and pi."""
    cos_t = 0.5 * (np.trace(R) - 1.0)
    cos_t = min(1.0, max(-1.0, cos_t))
    theta = np.arccos(cos_t)
    axial = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < SMALL_ANGLE:
        return axial * (1.0 + theta * theta / 6.0)
    if theta < np.pi - 1e-4:
        return axial * (theta / np.sin(theta))
    # Near pi the axial part degenerates; recover the axis from the symmetric part.
    S = 0.5 * (R + R.T)
    d = np.clip((np.diag(S) - cos_t) / (1.0 - cos_t), 0.0, None)
    axis = np.sqrt(d)
    # Fix signs using the off-diagonal terms, anchored on the largest component.
    k = int(np.argmax(axis))
    signs = np.ones(3)
    for i in range(3):
        if i != k:
            signs[i] = np.sign(S[k, i]) if S[k, i] != 0.0 else 1.0
    axis = axis * signs * np.sign(axial[k] if axial[k] != 0.0 else 1.0)
    n = np.linalg.norm(axis)
    if n == 0.0:  # exactly pi about a coordinate axis with zero axial part
        axis = np.sqrt(np.clip((np.diag(R) + 1.0) / 2.0, 0.0, None))
        n = np.linalg.norm(axis)
    return axis / n * theta


def so3_dexpinv(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inverse right-trivialized differential of exp at u, applied to v.

    dexpinv_u(v) = v - u x v / 2 + c2 * u x (u x v),
    c2 = (1 - (t/2) cot(t/2)) / t^2 with t = |u|.
    """
    theta = np.linalg.norm(u)
    if theta < SMALL_ANGLE:
        c2 = 1.0 / 12.0 + theta * theta / 720.0
    else:
        half = 0.5 * theta
        c2 = (1.0 - half / np.tan(half)) / (theta * theta)
    uxv = np.cross(u, v)
    return v - 0.5 * uxv + c2 * np.cross(u, uxv)


# ---------------------------------------------------------------------------
# rigid transforms


@dataclass(frozen=True)
class Transform:
    """World-from-frame rigid transform: rotation matrix R and origin p."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __matmul__(self, other: "Transform") -> "Transform":
        return Transform(self.R @ other.R, self.R @ other.p + self.p)

    def inverse(self) -> "Transform":
        return Transform(self.R.T, -self.R.T @ self.p)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.R @ point + self.p

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    @staticmethod
    def from_quat(q: np.ndarray, p: np.ndarray) -> "Transform":
        return Transform(quat_to_rot(q), np.asarray(p, dtype=float))

    @staticmethod
    def from_rpy(rpy, p) -> "Transform":
        r, pch, y = rpy
        cr, sr = np.cos(r), np.sin(r)
        cp, sp = np.cos(pch), np.sin(pch)
        cy, sy = np.cos(y), np.sin(y)
        R = np.array(
            [
                [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
                [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
                [-sp, cp * sr, cp * cr],
            ]
        )
        return Transform(R, np.asarray(p, dtype=float))


def pose_error(x_d: Transform, x: Transform) -> np.ndarray:
    """6-D pose error (translation difference; rotation log), world frame.

    The orientation part is log(R_d R^T): the rotation taking x to x_d,
    which is the gradient-consistent error for an isotropic rotation spring.
    """
    return np.concatenate([x_d.p - x.p, rot_log(x_d.R @ x.R.T)])


def slerp(q0: np.ndarray, q1: np.ndarray, s: float) -> np.ndarray:
    """Spherical interpolation between unit quaternions, shortest arc."""
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(q0 + s * (q1 - q0))
    theta = np.arccos(min(1.0, dot))
    return quat_normalize(
        (np.sin((1.0 - s) * theta) * q0 + np.sin(s * theta) * q1) / np.sin(theta)
    )
