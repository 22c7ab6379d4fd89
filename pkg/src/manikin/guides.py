"""Passive virtual guides: auxiliary mechanisms coupled by damped springs.

A guide is not an algebraic constraint: it is a simulated first-order
mechanism of its own, pulled toward the manikin frame through a 6-D damped
spring. Restricting motion this way costs energy instead of projecting it,
which is what keeps the coupled system passive.

The coupling wrench is evaluated at the manikin attachment point; the guide
receives the exact opposite wrench at the coincident material point, so
action equals reaction by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from manikin import chain as chain_mod
from manikin.chain import FrameRef, KinematicChain, SimState
from manikin.errors import ConfigurationError
from manikin.se3 import Transform, rot_log, skew

SYMMETRY_TOL = 1e-12


def _check_coupling_gain(name, G, definite):
    G = np.asarray(G, dtype=float)
    if G.ndim == 0:
        G = np.eye(6) * float(G)
    elif G.ndim == 1:
        G = np.diag(G)
    if np.abs(G - G.T).max() > SYMMETRY_TOL:
        raise ConfigurationError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(G)
    if definite and eig.min() <= 0.0:
        raise ConfigurationError(f"{name} must be positive definite")
    if eig.min() < -SYMMETRY_TOL:
        raise ConfigurationError(f"{name} must be positive semi-definite")
    return G


@dataclass(frozen=True)
class GuideCoupling:
    """Damped-spring attachment between a manikin frame and the guide tool."""

    manikin_frame: FrameRef
    stiffness: np.ndarray
    damping: np.ndarray

    def __post_init__(self):
        # B_g is allowed to be semi-definite (down to zero) so a coupling can
        # be switched off in place; the guide's own B_v stays strictly definite.
        object.__setattr__(
            self, "stiffness", _check_coupling_gain("guide stiffness K_g", self.stiffness, False)
        )
        object.__setattr__(
            self, "damping", _check_coupling_gain("guide damping B_g", self.damping, False)
        )


@dataclass(frozen=True)
class VirtualMechanism:
    """A guide: its own kinematic chain, tool frame, and coupling."""

    chain: KinematicChain
    tool: FrameRef
    coupling: GuideCoupling
    name: str = "guide"

    def __post_init__(self):
        if not 0 <= self.tool.link < self.chain.n_links:
            raise ConfigurationError(f"guide {self.name!r}: bad tool link {self.tool.link}")
        try:
            np.linalg.cholesky(self.chain.damping)
        except np.linalg.LinAlgError:
            raise ConfigurationError(
                f"guide {self.name!r}: mechanism damping B_v must be positive definite"
            ) from None

    @property
    def B_v(self) -> np.ndarray:
        return self.chain.damping


@dataclass(frozen=True)
class CouplingGeometry:
    """Per-step kinematic data of a coupling, shared by wrench evaluation
    and by the implicit solver's assembly."""

    p_m: np.ndarray          # world attachment point on the manikin
    err: np.ndarray          # 6-D pose error, guide relative to manikin
    J_m: np.ndarray          # manikin Jacobian at p_m
    J_g: np.ndarray          # guide tool Jacobian transported to p_m


def coupling_error(mech: VirtualMechanism, manikin_chain, manikin_state,
                   guide_state, manikin_fk=None, guide_fk=None):
    """Attachment point and 6-D pose error (guide relative to manikin)."""
    from manikin.chain import _fk_arrays

    mfk = manikin_fk if manikin_fk is not None else _fk_arrays(manikin_chain, manikin_state)
    gfk = guide_fk if guide_fk is not None else _fk_arrays(mech.chain, guide_state)
    ref = mech.coupling.manikin_frame
    R_m, p_m_all = mfk
    p_m = R_m[ref.link] @ ref.point + p_m_all[ref.link]
    R_g, p_g_all = gfk
    R_tool = R_g[mech.tool.link]
    p_tool = R_tool @ mech.tool.point + p_g_all[mech.tool.link]
    err = np.concatenate([p_tool - p_m, rot_log(R_tool @ R_m[ref.link].T)])
    return p_m, err, mfk, gfk


def coupling_geometry(mech: VirtualMechanism, manikin_chain, manikin_state,
                      guide_state, manikin_fk=None, guide_fk=None) -> CouplingGeometry:
    p_m, err, mfk, gfk = coupling_error(
        mech, manikin_chain, manikin_state, guide_state, manikin_fk, guide_fk
    )
    ref = mech.coupling.manikin_frame
    J_m = chain_mod.frame_jacobian(manikin_chain, manikin_state, ref.link, ref.point,
                                   fk_arrays=mfk)
    # guide Jacobian at the material point coincident with p_m
    R_g, p_g_all = gfk
    R_tool = R_g[mech.tool.link]
    local = R_tool.T @ (p_m - p_g_all[mech.tool.link])
    J_g = chain_mod.frame_jacobian(mech.chain, guide_state, mech.tool.link, local,
                                   fk_arrays=gfk)
    return CouplingGeometry(p_m, err, J_m, J_g)


def guide_wrenches(mech: VirtualMechanism, manikin_chain, manikin_state: SimState,
                   guide_state: SimState, manikin_qdot=None, guide_qdot=None):
    """Equal-and-opposite damped-spring wrench pair (on manikin, on guide).

    Both wrenches act at the manikin attachment point; the guide side is the
    exact negation, so the pair sums to zero about any common point.
    """
    geo = coupling_geometry(mech, manikin_chain, manikin_state, guide_state)
    v_m = geo.J_m @ manikin_qdot if manikin_qdot is not None else np.zeros(6)
    v_g = geo.J_g @ guide_qdot if guide_qdot is not None else np.zeros(6)
    W_m = mech.coupling.stiffness @ geo.err + mech.coupling.damping @ (v_g - v_m)
    return W_m, -W_m


def step_guide(mech: VirtualMechanism, guide_state: SimState, wrench_on_guide: np.ndarray,
               dt: float, at_point=None) -> SimState:
    """Advance the guide under a held wrench: B_v qdot = J_v^T W.

    ``at_point`` optionally gives the world point where the wrench acts
    (defaults to the tool frame origin).
    """
    if at_point is None:
        J_v = chain_mod.frame_jacobian(mech.chain, guide_state, mech.tool.link, mech.tool.point)
    else:
        from manikin.chain import _fk_arrays

        gfk = _fk_arrays(mech.chain, guide_state)
        R, p = gfk
        local = R[mech.tool.link].T @ (np.asarray(at_point) - p[mech.tool.link])
        J_v = chain_mod.frame_jacobian(mech.chain, guide_state, mech.tool.link, local,
                                       fk_arrays=gfk)
    qdot = np.linalg.solve(mech.B_v, J_v.T @ wrench_on_guide)
    return chain_mod.integrate(mech.chain, guide_state, qdot, dt)


def axis_error(tool_pose: Transform, ideal_axis, tool_axis_local) -> float:
    """Angle in radians between the tool axis (world) and the ideal axis."""
    a = np.asarray(ideal_axis, dtype=float)
    b = np.asarray(tool_axis_local, dtype=float)
    for v, label in ((a, "ideal_axis"), (b, "tool_axis_local")):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError(f"{label} must be a unit vector")
    world_axis = tool_pose.R @ b
    return float(np.arccos(np.clip(world_axis @ a, -1.0, 1.0)))


def transport_wrench(W: np.ndarray, from_point: np.ndarray, to_point: np.ndarray) -> np.ndarray:
    """Re-express a wrench about another point: the moment gains r x f."""
    f, tau = W[0:3], W[3:6]
    r = np.asarray(from_point) - np.asarray(to_point)
    return np.concatenate([f, tau + skew(r) @ f])
