"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import itertools

import numpy as np

from manikin import chain as chain_mod
from manikin.chain import JointSpec, KinematicChain, LinkSpec, SimState
from manikin.se3 import Transform, rot_log


def planar_chain(n: int, length: float = 1.0, damping: float = 2.0) -> KinematicChain:
    """n revolute z-joints in a row, segments of the given length."""
    joints = [JointSpec("revolute", [0, 0, 1]) for _ in range(n)]
    links = [
        LinkSpec(i - 1, Transform(np.eye(3), np.array([0.0 if i == 0 else length, 0.0, 0.0])),
                 length)
        for i in range(n)
    ]
    return KinematicChain(joints, links, damping)


def random_chain(rng, n_joints: int, floating: bool = False,
                 damping_spread=(0.5, 4.0)) -> KinematicChain:
    joints, links = [], []
    if floating:
        joints.append(JointSpec("floating_base"))
        links.append(LinkSpec(-1, Transform.identity(), 0.0))
    while len(joints) < n_joints:
        kind = "revolute" if rng.random() < 0.75 else "prismatic"
        axis = rng.standard_normal(3)
        joints.append(JointSpec(kind, axis / np.linalg.norm(axis)))
        offset = Transform.from_rpy(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3))
        links.append(LinkSpec(len(links) - 1, offset, 0.3))
    nv = sum(j.nv for j in joints)
    return KinematicChain(joints, links, np.diag(rng.uniform(*damping_spread, nv)))


def random_state(rng, chain: KinematicChain) -> SimState:
    return chain_mod.retract(chain, chain.neutral_state(), rng.uniform(-1.0, 1.0, chain.nv))


def fd_jacobian(chain, state, link, point, eps: float = 1e-7) -> np.ndarray:
    """Independent central-difference oracle for the frame Jacobian."""
    J = np.zeros((6, chain.nv))
    point = np.asarray(point, dtype=float)
    for i in range(chain.nv):
        d = np.zeros(chain.nv)
        d[i] = eps
        fp = chain_mod.forward_kinematics(chain, chain_mod.retract(chain, state, d))[link]
        fm = chain_mod.forward_kinematics(chain, chain_mod.retract(chain, state, -d))[link]
        J[0:3, i] = (fp.apply(point) - fm.apply(point)) / (2 * eps)
        J[3:6, i] = rot_log(fp.R @ fm.R.T) / (2 * eps)
    return J


def enumerate_lcp(M: np.ndarray, w: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Brute-force active-set oracle for small (PD) LCPs."""
    m = len(w)
    for size in range(m + 1):
        for active in itertools.combinations(range(m), size):
            f = np.zeros(m)
            idx = list(active)
            if idx:
                try:
                    f[idx] = np.linalg.solve(M[np.ix_(idx, idx)], -w[idx])
                except np.linalg.LinAlgError:
                    continue
                if np.any(f[idx] < -tol):
                    continue
            if np.all(M @ f + w >= -1e-9):
                return np.maximum(f, 0.0)
    raise RuntimeError("no active set solves the LCP")


def spd(rng, n: int) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return A @ A.T + 0.1 * np.eye(n)
