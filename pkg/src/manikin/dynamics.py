"""First-order damped dynamics: torques in, generalized velocity out.

The model has no mass: damping torques balance applied torques instantly,
so ``B_a qdot = sum(torques)``. The implicit solver additionally folds
task-space damping into the system matrix, which keeps stiff gains stable
at plain dt = 1e-2 stepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from manikin.errors import NumericalFaultError, SingularMatrixError

SOURCES = ("task", "internal", "constraint", "guide", "external")

# Relative eigenvalue threshold below which a system matrix counts as singular.
SINGULAR_REL = 1e-12


@dataclass(frozen=True)
class TorqueVector:
    """Joint torques tagged by the controller stage that produced them."""

    values: np.ndarray
    source: str = "external"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.source not in SOURCES:
            raise ValueError(f"unknown torque source {self.source!r}")
        if not np.all(np.isfinite(self.values)):
            raise NumericalFaultError(f"non-finite {self.source} torque")


@dataclass(frozen=True)
class TaskChannel:
    """One assembled damped-spring attachment for the implicit solve.

    ``J`` is the port Jacobian (m x nv, m <= 6), ``k_err`` the evaluated
    stiffness force K (x_d - x), ``damping`` the m x m damping B_c, and
    ``v_d`` the desired port velocity.
    """

    J: np.ndarray
    k_err: np.ndarray
    damping: np.ndarray
    v_d: np.ndarray


@dataclass(frozen=True)
class VelocitySolveReport:
    qdot: np.ndarray
    system_matrix_condition: float
    solvable: bool


def sum_torques(torques, nv: int) -> np.ndarray:
    total = np.zeros(nv)
    for t in torques:
        v = t.values if isinstance(t, TorqueVector) else np.asarray(t, dtype=float)
        if v.shape != (nv,):
            raise ValueError(f"torque of dimension {v.shape} on a {nv}-DOF system")
        total += v
    return total


def solve_velocity_explicit(chain, torques) -> np.ndarray:
    """qdot = B_a^-1 * sum(torques). Requires strictly definite damping."""
    total = sum_torques(torques, chain.nv)
    B = chain.damping
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            "damping matrix is singular; the explicit path needs B_a definite "
            "(use solve_velocity_implicit, which only needs the task-augmented "
            "system matrix to be definite)"
        ) from None
    y = np.linalg.solve(L, total)
    return np.linalg.solve(L.T, y)


def assemble_system(chain, channels) -> tuple[np.ndarray, np.ndarray]:
    """System matrix B_a + sum(J^T B_c J) and the task right-hand side
    sum(J^T (K(x_d - x) + B_c v_d))."""
    S = chain.damping.copy()
    rhs = np.zeros(chain.nv)
    for ch in channels:
        BJ = ch.damping @ ch.J
        S += ch.J.T @ BJ
        rhs += ch.J.T @ (ch.k_err + ch.damping @ ch.v_d)
    S = 0.5 * (S + S.T)  # clear roundoff asymmetry from the rank updates
    return S, rhs


class SystemFactor:
    """Cholesky factor of a symmetric system matrix, with an eigen fallback
    when the matrix is singular beyond SINGULAR_REL."""

    def __init__(self, S: np.ndarray):
        self.S = S
        self.solvable = True
        self._eig = None
        self._L = None
        try:
            L = np.linalg.cholesky(S)
            d = np.diagonal(L)
            estimate = float((d.max() / d.min()) ** 2)
            if estimate < 0.1 / SINGULAR_REL:
                self._L = L
                self.condition = estimate
        except np.linalg.LinAlgError:
            pass
        if self._L is None:
            vals, vecs = np.linalg.eigh(S)
            self._eig = (vals, vecs)
            top, bottom = float(vals[-1]), float(vals[0])
            self.condition = float(np.inf) if bottom <= 0.0 else top / bottom
            self.solvable = bool(top > 0.0 and bottom > SINGULAR_REL * top)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._L is not None:
            return np.linalg.solve(self._L.T, np.linalg.solve(self._L, rhs))
        vals, vecs = self._eig
        cut = SINGULAR_REL * float(vals[-1])
        inv = np.where(vals > cut, 1.0 / np.where(vals > cut, vals, 1.0), 0.0)
        return vecs @ (inv * (vecs.T @ rhs))


def solve_velocity_implicit(chain, channels, external_torques=None) -> VelocitySolveReport:
    """Resolvent of the damped-spring network:

    (B_a + sum J^T B_c J) qdot = sum J^T (K(x_d - x) + B_c v_d) + external.

    External torques (constraints, guides computed elsewhere, internal
    potentials) enter the right-hand side only.
    """
    S, rhs = assemble_system(chain, channels)
    if external_torques is not None:
        rhs = rhs + sum_torques(
            external_torques if isinstance(external_torques, (list, tuple)) else [external_torques],
            chain.nv,
        )
    factor = SystemFactor(S)
    if not factor.solvable:
        return VelocitySolveReport(np.zeros(chain.nv), factor.condition, False)
    return VelocitySolveReport(factor.solve(rhs), factor.condition, True)
