"""Pure-numpy kernels: forward kinematics, point Jacobians, PGS sweeps.

Same contract as the compiled module ``manikin._kernels``; whichever is
importable gets selected by :mod:`manikin.backend`. Joint kind codes:
0 = revolute, 1 = prismatic, 2 = floating base (quat w,x,y,z + translation).

Floating-base velocity convention: (linear velocity in the joint's parent
frame; angular velocity in the body frame). With the customary identity
root offset that is (world linear; body angular).
"""

from __future__ import annotations

import numpy as np

COMPILED = False

REVOLUTE = 0
PRISMATIC = 1
FLOATING = 2


def _axis_angle_rot(axis: np.ndarray, angle: float) -> np.ndarray:
    c = np.cos(angle)
    s = np.sin(angle)
    x, y, z = axis
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def _quat_rot(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def fk(parents, kinds, axes, off_R, off_p, qidx, q):
    """Link world frames: returns (R, p) with shapes (n,3,3) and (n,3)."""
    n = len(parents)
    R = np.empty((n, 3, 3))
    p = np.empty((n, 3))
    for i in range(n):
        par = parents[i]
        if par < 0:
            Rj = off_R[i]
            pj = off_p[i].copy()
        else:
            Rj = R[par] @ off_R[i]
            pj = R[par] @ off_p[i] + p[par]
        kind = kinds[i]
        if kind == REVOLUTE:
            R[i] = Rj @ _axis_angle_rot(axes[i], q[qidx[i]])
            p[i] = pj
        elif kind == PRISMATIC:
            R[i] = Rj
            p[i] = pj + Rj @ (axes[i] * q[qidx[i]])
        else:  # FLOATING
            k = qidx[i]
            R[i] = Rj @ _quat_rot(q[k : k + 4])
            p[i] = pj + Rj @ q[k + 4 : k + 7]
    return R, p


def point_jacobian(parents, kinds, axes, off_R, vidx, nv, R, p, link, local_point):
    """6 x nv world Jacobian (linear; angular) of a point carried by ``link``."""
    J = np.zeros((6, nv))
    pw = R[link] @ local_point + p[link]
    j = link
    while j >= 0:
        v = vidx[j]
        kind = kinds[j]
        if kind == REVOLUTE:
            a = R[j] @ axes[j]
            J[0:3, v] = np.cross(a, pw - p[j])
            J[3:6, v] = a
        elif kind == PRISMATIC:
            a = R[j] @ axes[j]
            J[0:3, v] = a
        else:  # FLOATING
            par = parents[j]
            Rj = off_R[j] if par < 0 else R[par] @ off_R[j]
            J[0:3, v : v + 3] = Rj
            J[0:3, v + 3 : v + 6] = -_skew(pw - p[j]) @ R[j]
            J[3:6, v + 3 : v + 6] = R[j]
        j = parents[j]
    return J


def _skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def pgs(M, w, f, tol, max_iter):
    """Projected Gauss-Seidel sweep on 0 <= f  perp  M f + w >= 0.

    Mutates ``f`` in place; returns (iterations, residual). Rows with a
    (near-)zero diagonal are skipped: for a PSD matrix their force cannot
    change the slack.
    """
    m = len(w)
    diag = np.diag(M)
    skip = diag <= 1e-300
    it = 0
    resid = np.inf
    for it in range(1, max_iter + 1):
        for i in range(m):
            if skip[i]:
                continue
            si = M[i] @ f + w[i]
            fi = f[i] - si / diag[i]
            f[i] = fi if fi > 0.0 else 0.0
        s = M @ f + w
        resid = _lcp_residual(f, s)
        if resid < tol:
            break
    return it, resid


def _lcp_residual(f, s):
    comp = np.abs(f * s).max() if len(f) else 0.0
    viol = max(0.0, float((-s).max())) if len(s) else 0.0
    return max(comp, viol)
