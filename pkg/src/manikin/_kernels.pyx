# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: forward kinematics, point Jacobians, PGS sweeps.

Mirrors manikin._kernels_py; see that module for the conventions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs, INFINITY

cnp.import_array()

COMPILED = True

REVOLUTE = 0
PRISMATIC = 1
FLOATING = 2

cdef int K_REVOLUTE = 0
cdef int K_PRISMATIC = 1
cdef int K_FLOATING = 2


cdef inline void _axis_angle_rot(const double* axis, double angle, double* R) noexcept nogil:
    cdef double c = cos(angle)
    cdef double s = sin(angle)
    cdef double x = axis[0], y = axis[1], z = axis[2]
    cdef double C = 1.0 - c
    R[0] = c + x * x * C;     R[1] = x * y * C - z * s; R[2] = x * z * C + y * s
    R[3] = y * x * C + z * s; R[4] = c + y * y * C;     R[5] = y * z * C - x * s
    R[6] = z * x * C - y * s; R[7] = z * y * C + x * s; R[8] = c + z * z * C


cdef inline void _quat_rot(const double* q, double* R) noexcept nogil:
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    R[0] = 1 - 2 * (y * y + z * z); R[1] = 2 * (x * y - z * w); R[2] = 2 * (x * z + y * w)
    R[3] = 2 * (x * y + z * w); R[4] = 1 - 2 * (x * x + z * z); R[5] = 2 * (y * z - x * w)
    R[6] = 2 * (x * z - y * w); R[7] = 2 * (y * z + x * w); R[8] = 1 - 2 * (x * x + y * y)


cdef inline void _mat33_mul(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]


cdef inline void _mat33_vec(const double* A, const double* v, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = A[3 * i] * v[0] + A[3 * i + 1] * v[1] + A[3 * i + 2] * v[2]


def fk(const cnp.int32_t[::1] parents, const cnp.int32_t[::1] kinds,
       const double[:, ::1] axes, const double[:, :, ::1] off_R, const double[:, ::1] off_p,
       const cnp.int32_t[::1] qidx, const double[::1] q):
    """Link world frames: returns (R, p) with shapes (n,3,3) and (n,3)."""
    cdef int n = parents.shape[0]
    R_arr = np.empty((n, 3, 3))
    p_arr = np.empty((n, 3))
    cdef double[:, :, ::1] R = R_arr
    cdef double[:, ::1] p = p_arr
    cdef double Rj[9]
    cdef double Jr[9]
    cdef double tmp[3]
    cdef double pj[3]
    cdef int i, par, kind, k, a
    with nogil:
        for i in range(n):
            par = parents[i]
            if par < 0:
                for a in range(9):
                    Rj[a] = (&off_R[i, 0, 0])[a]
                pj[0] = off_p[i, 0]; pj[1] = off_p[i, 1]; pj[2] = off_p[i, 2]
            else:
                _mat33_mul(&R[par, 0, 0], &off_R[i, 0, 0], Rj)
                _mat33_vec(&R[par, 0, 0], &off_p[i, 0], pj)
                pj[0] += p[par, 0]; pj[1] += p[par, 1]; pj[2] += p[par, 2]
            kind = kinds[i]
            if kind == K_REVOLUTE:
                _axis_angle_rot(&axes[i, 0], q[qidx[i]], Jr)
                _mat33_mul(Rj, Jr, &R[i, 0, 0])
                p[i, 0] = pj[0]; p[i, 1] = pj[1]; p[i, 2] = pj[2]
            elif kind == K_PRISMATIC:
                for a in range(9):
                    (&R[i, 0, 0])[a] = Rj[a]
                tmp[0] = axes[i, 0] * q[qidx[i]]
                tmp[1] = axes[i, 1] * q[qidx[i]]
                tmp[2] = axes[i, 2] * q[qidx[i]]
                _mat33_vec(Rj, tmp, &p[i, 0])
                p[i, 0] += pj[0]; p[i, 1] += pj[1]; p[i, 2] += pj[2]
            else:
                k = qidx[i]
                _quat_rot(&q[k], Jr)
                _mat33_mul(Rj, Jr, &R[i, 0, 0])
                _mat33_vec(Rj, &q[k + 4], &p[i, 0])
                p[i, 0] += pj[0]; p[i, 1] += pj[1]; p[i, 2] += pj[2]
    return R_arr, p_arr


def point_jacobian(const cnp.int32_t[::1] parents, const cnp.int32_t[::1] kinds,
                   const double[:, ::1] axes, const double[:, :, ::1] off_R,
                   const cnp.int32_t[::1] vidx, int nv,
                   const double[:, :, ::1] R, const double[:, ::1] p,
                   int link, const double[::1] local_point):
    """6 x nv world Jacobian (linear; angular) of a point carried by ``link``."""
    J_arr = np.zeros((6, nv))
    cdef double[:, ::1] J = J_arr
    cdef double pw[3]
    cdef double a[3]
    cdef double r[3]
    cdef double Rj[9]
    cdef int j, v, kind, par, row, col
    with nogil:
        _mat33_vec(&R[link, 0, 0], &local_point[0], pw)
        pw[0] += p[link, 0]; pw[1] += p[link, 1]; pw[2] += p[link, 2]
        j = link
        while j >= 0:
            v = vidx[j]
            kind = kinds[j]
            if kind == K_REVOLUTE:
                _mat33_vec(&R[j, 0, 0], &axes[j, 0], a)
                r[0] = pw[0] - p[j, 0]; r[1] = pw[1] - p[j, 1]; r[2] = pw[2] - p[j, 2]
                J[0, v] = a[1] * r[2] - a[2] * r[1]
                J[1, v] = a[2] * r[0] - a[0] * r[2]
                J[2, v] = a[0] * r[1] - a[1] * r[0]
                J[3, v] = a[0]; J[4, v] = a[1]; J[5, v] = a[2]
            elif kind == K_PRISMATIC:
                _mat33_vec(&R[j, 0, 0], &axes[j, 0], a)
                J[0, v] = a[0]; J[1, v] = a[1]; J[2, v] = a[2]
            else:
                par = parents[j]
                if par < 0:
                    for row in range(9):
                        Rj[row] = (&off_R[j, 0, 0])[row]
                else:
                    _mat33_mul(&R[par, 0, 0], &off_R[j, 0, 0], Rj)
                r[0] = pw[0] - p[j, 0]; r[1] = pw[1] - p[j, 1]; r[2] = pw[2] - p[j, 2]
                for row in range(3):
                    for col in range(3):
                        J[row, v + col] = Rj[3 * row + col]
                # linear w.r.t. body angular velocity: -skew(r) @ R_body
                for col in range(3):
                    J[0, v + 3 + col] = -(-r[2] * R[j, 1, col] + r[1] * R[j, 2, col])
                    J[1, v + 3 + col] = -(r[2] * R[j, 0, col] - r[0] * R[j, 2, col])
                    J[2, v + 3 + col] = -(-r[1] * R[j, 0, col] + r[0] * R[j, 1, col])
                for row in range(3):
                    for col in range(3):
                        J[3 + row, v + 3 + col] = R[j, row, col]
            j = parents[j]
    return J_arr


def pgs(const double[:, ::1] M, const double[::1] w, double[::1] f, double tol, int max_iter):
    """Projected Gauss-Seidel; mutates f in place, returns (iterations, residual)."""
    cdef int m = w.shape[0]
    cdef int it = 0, i, k
    cdef double si, fi, resid = INFINITY, comp, viol
    with nogil:
        for it in range(1, max_iter + 1):
            for i in range(m):
                if M[i, i] <= 1e-300:
                    continue
                si = w[i]
                for k in range(m):
                    si += M[i, k] * f[k]
                fi = f[i] - si / M[i, i]
                f[i] = fi if fi > 0.0 else 0.0
            comp = 0.0
            viol = 0.0
            for i in range(m):
                si = w[i]
                for k in range(m):
                    si += M[i, k] * f[k]
                if fabs(f[i] * si) > comp:
                    comp = fabs(f[i] * si)
                if -si > viol:
                    viol = -si
            resid = comp if comp > viol else viol
            if resid < tol:
                break
    return it, resid
