"""Unilateral constraints: joint limits and point contacts solved as LCPs.

Constraints act at the velocity level on the first-order model. For a gap g
(signed distance, non-negative when satisfied) with row Jacobian J_c, the
per-step complementarity condition is

    0 <= f  perp  J_c qdot + max(0, g)/dt - gamma * max(0, -g)/dt >= 0,

i.e. from outside a constraint may close at most its remaining gap within
the step (next-step non-penetration), and once penetrated it is pushed out
at a fraction gamma of the depth per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from manikin import backend
from manikin.chain import frame_jacobian
from manikin.dynamics import TorqueVector
from manikin.errors import ConfigurationError, LcpConvergenceError, NumericalFaultError

JOINT_LIMIT_LOWER = "joint_limit_lower"
JOINT_LIMIT_UPPER = "joint_limit_upper"
POINT_CONTACT = "point_contact"

DEFAULT_GAMMA = 0.2
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 2000


@dataclass(frozen=True)
class HalfSpace:
    """Solid region below the plane normal . p = offset; gap = n.p - offset."""

    normal: np.ndarray
    offset: float
    name: str = ""

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ConfigurationError("half-space normal must be unit length")
        object.__setattr__(self, "normal", n)

    def gap_and_normal(self, p: np.ndarray):
        return float(self.normal @ p - self.offset), self.normal


@dataclass(frozen=True)
class Sphere:
    """Solid ball: gap = |p - center| - radius."""

    center: np.ndarray
    radius: float
    name: str = ""

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ConfigurationError("sphere radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def gap_and_normal(self, p: np.ndarray):
        d = p - self.center
        dist = float(np.linalg.norm(d))
        if dist < 1e-12:
            n = np.array([0.0, 0.0, 1.0])  # degenerate: probe at center
        else:
            n = d / dist
        return dist - self.radius, n


@dataclass(frozen=True)
class UnilateralConstraint:
    """One scalar inequality: its kind, current gap, and gap-rate row."""

    kind: str
    key: str
    gap: float
    row: np.ndarray


@dataclass(frozen=True)
class ContactSolution:
    """Non-negative constraint forces with their complementarity residual."""

    f: np.ndarray
    slack: np.ndarray
    residual: float
    iterations: int = 0


def detect_constraints(chain, state, obstacles=(), activation_margin: float = 0.05,
                       fk_arrays=None) -> list[UnilateralConstraint]:
    """All joint limits and probe/obstacle pairs closer than the margin."""
    if activation_margin <= 0.0:
        raise ValueError("activation margin must be positive")
    out: list[UnilateralConstraint] = []
    if len(chain._lim_qidx):
        qs = state.q[chain._lim_qidx]
        lo_gap = qs - chain._lim_lo
        hi_gap = chain._lim_hi - qs
        for k in np.nonzero(lo_gap < activation_margin)[0]:
            j = chain.limited_joints()[k]
            row = np.zeros(chain.nv)
            row[chain._lim_vidx[k]] = 1.0
            out.append(UnilateralConstraint(JOINT_LIMIT_LOWER, f"limit_lo:{j}", lo_gap[k], row))
        for k in np.nonzero(hi_gap < activation_margin)[0]:
            j = chain.limited_joints()[k]
            row = np.zeros(chain.nv)
            row[chain._lim_vidx[k]] = -1.0
            out.append(UnilateralConstraint(JOINT_LIMIT_UPPER, f"limit_hi:{j}", hi_gap[k], row))
    if obstacles and chain.collision_points:
        from manikin.chain import _fk_arrays

        fk = fk_arrays if fk_arrays is not None else _fk_arrays(chain, state)
        R, p = fk
        for cp in chain.collision_points:
            pw = R[cp.link] @ cp.point + p[cp.link]
            for obs in obstacles:
                gap, normal = obs.gap_and_normal(pw)
                if gap < activation_margin:
                    J = frame_jacobian(chain, state, cp.link, cp.point, fk_arrays=fk)
                    row = normal @ J[0:3]
                    key = f"contact:{cp.name or cp.link}/{obs.name or type(obs).__name__}"
                    out.append(UnilateralConstraint(POINT_CONTACT, key, gap, row))
    return out


def assemble_lcp(constraints, system_factor, free_velocity, dt: float,
                 gamma: float = DEFAULT_GAMMA, recovery_cap: float = 1.0,
                 regularization: float = 1e-6):
    """Build (M, w) for the active constraints against a factored system matrix.

    M = J_c S^-1 J_c^T with S the implicit-solve system matrix; w is the free
    gap rate plus the approach/recovery stabilization described above. The
    push-out speed is capped at ``recovery_cap`` and the mobility diagonal is
    floored by ``regularization`` so that contacts along nearly unactuatable
    (singular) directions stay bounded instead of producing huge impulses.
    """
    m = len(constraints)
    if m == 0:
        return np.zeros((0, 0)), np.zeros(0)
    Jc = np.stack([c.row for c in constraints])
    gaps = np.array([c.gap for c in constraints])
    X = np.column_stack([system_factor.solve(Jc[i]) for i in range(m)])  # S^-1 Jc^T
    M = Jc @ X
    M = 0.5 * (M + M.T) + regularization * np.eye(m)
    recovery = np.minimum(gamma * np.maximum(-gaps, 0.0) / dt, recovery_cap)
    w = Jc @ free_velocity + np.maximum(gaps, 0.0) / dt - recovery
    return M, w


def solve_lcp(M: np.ndarray, w: np.ndarray, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER, f0=None) -> ContactSolution:
    """Projected Gauss-Seidel on a PSD complementarity problem."""
    m = len(w)
    if m == 0:
        return ContactSolution(np.zeros(0), np.zeros(0), 0.0, 0)
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(w))):
        raise NumericalFaultError("non-finite LCP data")
    f = np.zeros(m) if f0 is None else np.asarray(f0, dtype=float).copy()
    M = np.ascontiguousarray(M, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    iters, resid = backend.kernels().pgs(M, w, f, tol, max_iter)
    if resid >= tol:
        raise LcpConvergenceError(
            f"PGS did not reach {tol:g} after {iters} sweeps (residual {resid:.3e}); "
            "reduce dt or reject the step",
            residual=float(resid),
            iterations=int(iters),
        )
    slack = M @ f + w
    return ContactSolution(f, slack, float(resid), int(iters))


def constraint_torques(constraints, solution: ContactSolution, nv: int | None = None) -> TorqueVector:
    """Map constraint forces back to joint torques: Gamma_c = J_c^T f."""
    if nv is None:
        if not constraints:
            raise ValueError("cannot infer dimension from an empty constraint set")
        nv = len(constraints[0].row)
    total = np.zeros(nv)
    for c, fi in zip(constraints, solution.f):
        total += c.row * fi
    return TorqueVector(total, source="constraint")
