"""Articulated-chain model: topology, forward kinematics, Jacobians, integration.

A chain is an immutable tree of links, each driven by one joint (revolute,
prismatic, or a single floating base at the root). All per-step data lives in
:class:`SimState`, so chains can be shared freely and states snapshotted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from manikin import backend, se3
from manikin.errors import ConfigurationError, NumericalFaultError, SchemaError
from manikin.se3 import Transform

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FLOATING = "floating_base"

_KIND_CODE = {REVOLUTE: 0, PRISMATIC: 1, FLOATING: 2}

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-12


@dataclass(frozen=True)
class JointSpec:
    """One joint: kind plus, for 1-DOF joints, its axis in the joint frame."""

    kind: str
    axis: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ConfigurationError(f"unknown joint kind {self.kind!r}")
        if self.kind == FLOATING:
            if self.axis is not None:
                raise ConfigurationError("floating base takes no axis")
            return
        axis = np.asarray(self.axis, dtype=float)
        norm = np.linalg.norm(axis)
        if axis.shape != (3,) or norm == 0.0 or not np.isfinite(norm):
            raise ConfigurationError("joint axis must be a nonzero 3-vector")
        object.__setattr__(self, "axis", axis / norm)

    @property
    def nq(self) -> int:
        return 7 if self.kind == FLOATING else 1

    @property
    def nv(self) -> int:
        return 6 if self.kind == FLOATING else 1


@dataclass(frozen=True)
class LinkSpec:
    """Link attached by one joint: parent index (-1 = world), fixed offset, length."""

    parent: int
    offset: Transform = field(default_factory=Transform.identity)
    length: float = 0.0


@dataclass(frozen=True)
class CollisionPoint:
    """A contact probe: a point fixed in a link's frame."""

    link: int
    point: np.ndarray
    name: str = ""


@dataclass(frozen=True)
class FrameRef:
    """A designated frame: a link plus a point in its local frame."""

    link: int
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class SimState:
    """Generalized coordinates and time. Value type; copy freely."""

    q: np.ndarray
    t: float = 0.0


class KinematicChain:
    """Immutable joint/link tree with damping, limits and contact probes.

    ``damping`` accepts a scalar (isotropic), an nv-vector (diagonal) or a
    full nv x nv matrix; it must be symmetric positive semi-definite.
    ``limits`` is a per-joint sequence of (lo, hi) or None (floating base
    must be unlimited).
    """

    def __init__(self, joints, links, damping, limits=None, collision_points=()):
        joints = list(joints)
        links = list(links)
        if len(joints) != len(links):
            raise ConfigurationError(
                f"{len(joints)} joints but {len(links)} links; need one joint per link"
            )
        if not joints:
            raise ConfigurationError("empty chain")
        n = len(joints)
        for i, link in enumerate(links):
            if not -1 <= link.parent < i:
                raise ConfigurationError(
                    f"link {i}: parent {link.parent} must precede it (tree, topological order)"
                )
        for i, joint in enumerate(joints):
            if joint.kind == FLOATING and i != 0:
                raise ConfigurationError("floating base must be the root joint")
        if sum(j.kind == FLOATING for j in joints) > 1:
            raise ConfigurationError("at most one floating base")

        self.joints = tuple(joints)
        self.links = tuple(links)
        self.n_links = n

        # packed arrays for the kernels
        self._parents = np.array([l.parent for l in links], dtype=np.int32)
        self._kinds = np.array([_KIND_CODE[j.kind] for j in joints], dtype=np.int32)
        self._axes = np.zeros((n, 3))
        for i, j in enumerate(joints):
            if j.axis is not None:
                self._axes[i] = j.axis
        self._off_R = np.ascontiguousarray([l.offset.R for l in links], dtype=float)
        self._off_p = np.ascontiguousarray([l.offset.p for l in links], dtype=float)
        self._qidx = np.zeros(n, dtype=np.int32)
        self._vidx = np.zeros(n, dtype=np.int32)
        nq = nv = 0
        for i, j in enumerate(joints):
            self._qidx[i] = nq
            self._vidx[i] = nv
            nq += j.nq
            nv += j.nv
        self.nq = nq
        self.nv = nv
        scalar = [i for i, j in enumerate(joints) if j.kind != FLOATING]
        self._scalar_qidx = self._qidx[scalar]
        self._scalar_vidx = self._vidx[scalar]
        self._floating = [i for i, j in enumerate(joints) if j.kind == FLOATING]

        self.damping = self._check_damping(damping)
        self.limits = self._check_limits(limits)
        self._limited = tuple(
            i for i in range(n) if np.isfinite(self.limits[i]).any()
        )
        self._lim_qidx = self._qidx[list(self._limited)]
        self._lim_vidx = self._vidx[list(self._limited)]
        self._lim_lo = self.limits[list(self._limited), 0].copy()
        self._lim_hi = self.limits[list(self._limited), 1].copy()
        self.collision_points = tuple(collision_points)
        for cp in self.collision_points:
            if not 0 <= cp.link < n:
                raise ConfigurationError(f"collision point {cp.name!r}: bad link {cp.link}")
        for arr in (self._parents, self._kinds, self._axes, self._off_R, self._off_p,
                    self._qidx, self._vidx, self.damping, self.limits):
            arr.setflags(write=False)

    def _check_damping(self, damping) -> np.ndarray:
        B = np.asarray(damping, dtype=float)
        if B.ndim == 0:
            B = np.eye(self.nv) * float(B)
        elif B.ndim == 1:
            if B.shape != (self.nv,):
                raise ConfigurationError(f"diagonal damping needs {self.nv} entries")
            B = np.diag(B)
        elif B.shape != (self.nv, self.nv):
            raise ConfigurationError(f"damping must be {self.nv}x{self.nv}")
        if np.abs(B - B.T).max() > SYMMETRY_TOL:
            raise ConfigurationError("damping matrix must be symmetric")
        if np.linalg.eigvalsh(B).min() < -PSD_TOL:
            raise ConfigurationError("damping matrix must be positive semi-definite")
        return B

    def _check_limits(self, limits) -> np.ndarray:
        out = np.full((self.n_links, 2), (-np.inf, np.inf))
        if limits is None:
            return out
        for i, lim in enumerate(limits):
            if lim is None:
                continue
            lo, hi = float(lim[0]), float(lim[1])
            if self.joints[i].kind == FLOATING:
                raise ConfigurationError("floating base cannot have limits")
            if lo > hi:
                raise ConfigurationError(f"joint {i}: q_min {lo} > q_max {hi}")
            out[i] = (lo, hi)
        return out

    # -- states ------------------------------------------------------------

    def neutral_state(self) -> SimState:
        q = np.zeros(self.nq)
        for i in self._floating:
            q[self._qidx[i]] = 1.0  # identity quaternion
        return SimState(q, 0.0)

    def check_state(self, state: SimState):
        if state.q.shape != (self.nq,):
            raise ConfigurationError(
                f"state has {state.q.shape[0] if state.q.ndim == 1 else '?'} coordinates, "
                f"chain needs {self.nq}"
            )

    def limited_joints(self):
        """Indices of joints carrying a finite limit."""
        return self._limited

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        joints = []
        for i, j in enumerate(self.joints):
            entry = {"kind": j.kind}
            if j.axis is not None:
                entry["axis"] = list(j.axis)
            lo, hi = self.limits[i]
            if np.isfinite(lo) or np.isfinite(hi):
                entry["limits"] = [lo, hi]
            joints.append(entry)
        links = [
            {
                "parent": int(l.parent),
                "translation": list(l.offset.p),
                "quaternion": list(se3.rot_to_quat(l.offset.R)),
                "length": l.length,
            }
            for l in self.links
        ]
        return {
            "version": 1,
            "joints": joints,
            "links": links,
            "damping": [[float(v) for v in row] for row in self.damping],
            "collision_points": [
                {"link": cp.link, "point": list(cp.point), "name": cp.name}
                for cp in self.collision_points
            ],
        }


CHAIN_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "joints", "links"],
    "properties": {
        "version": {"const": 1},
        "name": {"type": "string"},
        "joints": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": [REVOLUTE, PRISMATIC, FLOATING]},
                    "axis": {"type": "array", "items": {"type": "number"},
                             "minItems": 3, "maxItems": 3},
                    "limits": {"type": "array", "items": {"type": "number"},
                               "minItems": 2, "maxItems": 2},
                },
            },
        },
        "links": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["parent"],
                "properties": {
                    "parent": {"type": "integer"},
                    "translation": {"type": "array", "items": {"type": "number"},
                                    "minItems": 3, "maxItems": 3},
                    "rpy": {"type": "array", "items": {"type": "number"},
                            "minItems": 3, "maxItems": 3},
                    "quaternion": {"type": "array", "items": {"type": "number"},
                                   "minItems": 4, "maxItems": 4},
                    "length": {"type": "number"},
                },
            },
        },
        "damping": {},
        "collision_points": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["link", "point"],
                "properties": {
                    "link": {"type": "integer"},
                    "point": {"type": "array", "items": {"type": "number"},
                              "minItems": 3, "maxItems": 3},
                    "name": {"type": "string"},
                },
            },
        },
    },
}


def chain_from_dict(data: dict) -> KinematicChain:
    """Build a chain from the documented JSON structure (version required)."""
    import jsonschema

    try:
        jsonschema.validate(data, CHAIN_SCHEMA)
    except jsonschema.ValidationError as err:
        raise SchemaError(f"chain file invalid at {err.json_path}: {err.message}") from None

    joints, limits = [], []
    for spec in data["joints"]:
        joints.append(JointSpec(spec["kind"], spec.get("axis")))
        limits.append(spec.get("limits"))
    links = []
    for spec in data["links"]:
        if "quaternion" in spec:
            offset = Transform.from_quat(
                se3.quat_normalize(np.asarray(spec["quaternion"], dtype=float)),
                spec.get("translation", (0.0, 0.0, 0.0)),
            )
        else:
            offset = Transform.from_rpy(
                spec.get("rpy", (0.0, 0.0, 0.0)), spec.get("translation", (0.0, 0.0, 0.0))
            )
        links.append(LinkSpec(spec["parent"], offset, spec.get("length", 0.0)))
    probes = [
        CollisionPoint(cp["link"], np.asarray(cp["point"], dtype=float), cp.get("name", ""))
        for cp in data.get("collision_points", ())
    ]
    damping = data.get("damping", 1.0)
    if isinstance(damping, list) and damping and isinstance(damping[0], list):
        damping = np.asarray(damping, dtype=float)
    elif isinstance(damping, list):
        damping = np.asarray(damping, dtype=float)
    return KinematicChain(joints, links, damping, limits, probes)


def load_chain(path) -> KinematicChain:
    with open(path) as fh:
        return chain_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# kinematics


def _fk_arrays(chain: KinematicChain, state: SimState):
    return backend.kernels().fk(
        chain._parents, chain._kinds, chain._axes, chain._off_R, chain._off_p,
        chain._qidx, state.q,
    )


def forward_kinematics(chain: KinematicChain, state: SimState) -> list[Transform]:
    """World frame of every link."""
    chain.check_state(state)
    R, p = _fk_arrays(chain, state)
    return [Transform(R[i], p[i]) for i in range(chain.n_links)]


def frame_jacobian(
    chain: KinematicChain,
    state: SimState,
    link: int,
    local_point=(0.0, 0.0, 0.0),
    fk_arrays=None,
) -> np.ndarray:
    """6 x nv Jacobian mapping generalized velocity to the world twist
    (linear; angular) of the point's frame."""
    if not 0 <= link < chain.n_links:
        raise ConfigurationError(f"link index {link} out of range [0, {chain.n_links})")
    if fk_arrays is None:
        chain.check_state(state)
        fk_arrays = _fk_arrays(chain, state)
    R, p = fk_arrays
    return backend.kernels().point_jacobian(
        chain._parents, chain._kinds, chain._axes, chain._off_R, chain._vidx,
        chain.nv, R, p, link, np.asarray(local_point, dtype=float),
    )


# ---------------------------------------------------------------------------
# integration


def retract(chain: KinematicChain, state: SimState, dq: np.ndarray, t=None) -> SimState:
    """Move the state by a velocity-space displacement: additively for 1-DOF
    coordinates, by the group exponential for the floating base."""
    q = state.q.copy()
    q[chain._scalar_qidx] += dq[chain._scalar_vidx]
    for i in chain._floating:
        k, v = chain._qidx[i], chain._vidx[i]
        q[k + 4 : k + 7] += dq[v : v + 3]
        quat = se3.quat_mul(q[k : k + 4], se3.quat_exp(dq[v + 3 : v + 6]))
        q[k : k + 4] = se3.quat_normalize(quat)
    return SimState(q, state.t if t is None else t)


def integrate(chain: KinematicChain, state: SimState, qdot: np.ndarray, dt: float) -> SimState:
    """Advance one step under a velocity held constant over the step.

    For a constant generalized velocity the Munthe-Kaas correction terms
    vanish and the Runge-Kutta update collapses to the exact group
    exponential; see :func:`integrate_field` for state-dependent fields.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    chain.check_state(state)
    qdot = np.asarray(qdot, dtype=float)
    if qdot.shape != (chain.nv,):
        raise ConfigurationError(f"velocity has {qdot.shape}, chain needs ({chain.nv},)")
    if not np.all(np.isfinite(qdot)):
        raise NumericalFaultError("non-finite generalized velocity")
    return retract(chain, state, qdot * dt, t=state.t + dt)


def _dexpinv_all(chain: KinematicChain, u: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Body angular velocity composes by right multiplication, so the inverse
    # differential is evaluated at -u (it would be +u for spatial rates).
    out = k.copy()
    for i in chain._floating:
        v = chain._vidx[i]
        out[v + 3 : v + 6] = se3.so3_dexpinv(-u[v + 3 : v + 6], k[v + 3 : v + 6])
    return out


def integrate_field(chain: KinematicChain, state: SimState, field, dt: float) -> SimState:
    """4-stage Munthe-Kaas Runge-Kutta step for a velocity field ``field(state)``.

    Stage increments live in the velocity (Lie-algebra) space; the inverse
    differential of exp is applied on the base-angular block, identity on
    the abelian coordinates.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    chain.check_state(state)
    t = state.t
    k1 = np.asarray(field(state), dtype=float)
    u2 = 0.5 * dt * k1
    k2 = _dexpinv_all(chain, u2, np.asarray(field(retract(chain, state, u2, t + 0.5 * dt))))
    u3 = 0.5 * dt * k2
    k3 = _dexpinv_all(chain, u3, np.asarray(field(retract(chain, state, u3, t + 0.5 * dt))))
    u4 = dt * k3
    k4 = _dexpinv_all(chain, u4, np.asarray(field(retract(chain, state, u4, t + dt))))
    u = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(u)):
        raise NumericalFaultError("non-finite stage increment")
    return retract(chain, state, u, t=t + dt)


def base_quaternion(chain: KinematicChain, state: SimState) -> np.ndarray | None:
    """The floating base's orientation quaternion, if the chain has one."""
    for i in chain._floating:
        k = chain._qidx[i]
        return state.q[k : k + 4]
    return None
