"""Port-level energy accounting and passivity verdicts.

A port is a power interface (wrench, twist) with its Jacobian. The ledger
integrates W^T V per port; the system is declared non-passive once the total
energy extracted through external ports exceeds the storage bound beta^2.

This module also builds the constructive counterexample showing that
prioritizing projections applied between two external ports drain energy at
a constant computable rate, and the two-port demonstration that projected
posture control leaks power through a second port.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from manikin import chain as chain_mod
from manikin.chain import FrameRef
from manikin.control import Projection, build_internal_projection, internal_torque
from manikin.errors import ConstructionFailedError, SingularMatrixError

# Roles whose energy counts toward the passivity verdict: ports where the
# environment or operator exchanges energy with the system. Guide-coupling
# and internal ports are bookkeeping of energy that stays inside the model.
EXTERNAL_ROLES = frozenset({"task", "contact"})

ROLES = ("task", "contact", "guide", "internal")


@dataclass(frozen=True)
class Port:
    """One recorded power interface at a step boundary.

    ``power_end`` optionally carries the power re-evaluated at the end of the
    step (same velocity, advanced pose) so the ledger can integrate the step
    trapezoidally; when omitted the power is treated as constant over the
    step, which is exact for the piecewise-constant velocities of the
    first-order model.
    """

    id: str
    J: np.ndarray
    W: np.ndarray
    V: np.ndarray
    role: str = "task"
    power_end: float | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown port role {self.role!r}")

    @property
    def power(self) -> float:
        return float(np.dot(self.W, self.V))


@dataclass
class Verdict:
    violated: bool
    t_violation: float | None
    beta_sq: float
    total_energy: float
    per_port: dict

    @property
    def passive_so_far(self) -> bool:
        return not self.violated


class PassivityLedger:
    """Running integrals of port power, with a ring-buffer history."""

    def __init__(self, beta_sq: float = 0.0, history_cap: int = 200_000):
        if beta_sq < 0.0:
            raise ValueError("beta_sq must be non-negative")
        self.beta_sq = float(beta_sq)
        self.energies: dict[str, float] = {}
        self.roles: dict[str, str] = {}
        self.total_external = 0.0
        self.history: deque = deque(maxlen=history_cap)
        self.faults: list[tuple[float, str]] = []
        self._t = 0.0
        self._violation_t: float | None = None

    def record_step(self, ports, dt: float, t: float | None = None) -> "PassivityLedger":
        """Advance every port's energy by its power integrated over dt."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        t_new = (self._t + dt) if t is None else float(t)
        if self.history and t_new <= self.history[-1][0]:
            raise ValueError(f"non-increasing sample time {t_new} after {self.history[-1][0]}")
        self._t = t_new
        powers = {}
        for port in ports:
            p0 = port.power
            p1 = p0 if port.power_end is None else float(port.power_end)
            if not (math.isfinite(p0) and math.isfinite(p1)):
                self.faults.append((self._t, port.id))
                continue
            self.roles[port.id] = port.role
            self.energies[port.id] = self.energies.get(port.id, 0.0) + dt * 0.5 * (p0 + p1)
            powers[port.id] = 0.5 * (p0 + p1)
            if port.role in EXTERNAL_ROLES:
                self.total_external += dt * 0.5 * (p0 + p1)
        self.history.append((self._t, powers, self.total_external))
        if self._violation_t is None and self.total_external < -self.beta_sq:
            self._violation_t = self._t
        return self

    def verdict(self, beta_sq: float | None = None) -> Verdict:
        """First-violation verdict for the stored bound or any other beta^2."""
        b = self.beta_sq if beta_sq is None else float(beta_sq)
        if beta_sq is None or beta_sq == self.beta_sq:
            t_viol = self._violation_t
        else:
            t_viol = next((t for t, _, tot in self.history if tot < -b), None)
        per_port = {
            pid: {"energy": e, "role": self.roles[pid]} for pid, e in self.energies.items()
        }
        return Verdict(t_viol is not None, t_viol, b, self.total_external, per_port)


def record_step(ledger: PassivityLedger, ports, dt: float, t: float | None = None):
    return ledger.record_step(ports, dt, t)


def passivity_verdict(ledger: PassivityLedger, beta_sq: float | None = None) -> Verdict:
    return ledger.verdict(beta_sq)


# ---------------------------------------------------------------------------
# the projection counterexample (two prioritized external ports)


@dataclass(frozen=True)
class Counterexample:
    """Constant-wrench two-port configuration that drains energy forever.

    With task 1 prioritized through the projection, the total two-port power
    is the constant ``predicted_power`` = -1/4 W2^T J2 B_a^-1 J2^T W2 < 0,
    so the running energy integral has no lower bound.
    """

    J1: np.ndarray
    J2: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    B_a: np.ndarray
    predicted_power: float
    projection: Projection
    residuals: tuple[float, float, float]

    def torque(self) -> np.ndarray:
        """Joint torque of the prioritized two-task controller."""
        return self.J1.T @ self.W1 + self.projection.matrix @ (self.J2.T @ self.W2)

    def measured_power(self, qdot: np.ndarray) -> float:
        return float(self.W1 @ (self.J1 @ qdot) + self.W2 @ (self.J2 @ qdot))


def build_counterexample(J1: np.ndarray, B_a: np.ndarray, W2_seed: np.ndarray) -> Counterexample:
    """Assemble the trivial J2 = J1 instance from a seed wrench.

    W1 solves J1^T W1 = -1/2 J2^T W2 in the least-squares sense. (The
    one-half factor needs the minus sign for the cancellation condition to
    hold; with J2 = J1 full column rank this is W1 = -W2/2.)
    """
    J1 = np.atleast_2d(np.asarray(J1, dtype=float))
    W2 = np.asarray(W2_seed, dtype=float)
    n = B_a.shape[0]
    try:
        Binv = np.linalg.inv(B_a)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("counterexample needs invertible damping") from None

    J2 = J1
    g2 = J2.T @ W2
    if np.linalg.norm(g2) < 1e-12:
        raise ConstructionFailedError("degenerate seed: J1^T W2 = 0 generates no torque")
    W1, *_ = np.linalg.lstsq(J1.T, -0.5 * g2, rcond=None)
    # residuals are relative to the scale of the quantity they cancel
    r_cancel = float(np.linalg.norm(J1.T @ W1 + 0.5 * g2) / np.linalg.norm(g2))
    if r_cancel > 1e-8:
        raise ConstructionFailedError(
            f"could not cancel the prioritized torque (residual {r_cancel:.3e})"
        )
    proj = build_internal_projection(J1, B_a)
    G = J2 @ Binv @ J2.T
    r_proj = float(np.linalg.norm(J2 @ Binv @ proj.matrix @ J2.T)
                   / max(np.linalg.norm(G), 1e-15))
    predicted = -0.25 * float(W2 @ G @ W2)
    return Counterexample(
        J1, J2, W1, W2, np.asarray(B_a, dtype=float), predicted,
        proj, (float(np.linalg.norm(g2)), r_cancel, r_proj),
    )


# ---------------------------------------------------------------------------
# two-port leak of projected posture control


@dataclass(frozen=True)
class LeakDemoResult:
    times: np.ndarray
    port2_power: np.ndarray
    cross_term: np.ndarray
    W2: np.ndarray

    @property
    def min_cross(self) -> float:
        return float(self.cross_term.min())

    @property
    def max_abs_cross(self) -> float:
        return float(np.abs(self.cross_term).max())


def _resolve_jacobian(chain, state, port, rows=None) -> np.ndarray:
    if isinstance(port, FrameRef):
        J = chain_mod.frame_jacobian(chain, state, port.link, port.point)
    else:
        J = np.atleast_2d(np.asarray(port, dtype=float))
    return J if rows is None else J[rows]


def two_port_internal_leak_demo(
    chain,
    state,
    potential,
    port1,
    contact_port,
    w2_scale: float = 1.0,
    steps: int = 100,
    dt: float = 0.01,
    port1_rows=None,
    port2_rows=None,
) -> LeakDemoResult:
    """Run projected posture control with a second (contact) port loaded.

    The projection is built against port 1 only; port 2 carries a constant
    wrench chosen adversarially along the leak direction J2 B_a^-1 Pi^T dU/dq,
    so the cross-term power is exhibited at its most negative. When the two
    ports coincide the leak direction vanishes and a unit fallback wrench
    shows the cross term is annihilated.
    """
    B_a = chain.damping
    Binv = np.linalg.inv(B_a)
    s = state
    J1 = _resolve_jacobian(chain, s, port1, port1_rows)
    J2 = _resolve_jacobian(chain, s, contact_port, port2_rows)
    proj = build_internal_projection(J1, B_a)
    g = np.asarray(potential.gradient(s.q), dtype=float)
    leak_dir = J2 @ Binv @ proj.matrix @ g
    if np.linalg.norm(leak_dir) > 1e-12:
        W2 = w2_scale * leak_dir / np.linalg.norm(leak_dir)
    else:
        W2 = np.zeros(J2.shape[0])
        W2[0] = w2_scale

    times = np.empty(steps)
    power = np.empty(steps)
    cross = np.empty(steps)
    for k in range(steps):
        J1 = _resolve_jacobian(chain, s, port1, port1_rows)
        J2 = _resolve_jacobian(chain, s, contact_port, port2_rows)
        proj = build_internal_projection(J1, B_a)
        g = np.asarray(potential.gradient(s.q), dtype=float)
        gamma_int = internal_torque(potential, proj, s.q).values
        qdot = Binv @ (J2.T @ W2 + gamma_int)
        times[k] = s.t
        power[k] = float(W2 @ (J2 @ qdot))
        cross[k] = float(W2 @ (J2 @ (Binv @ gamma_int)))
        s = chain_mod.integrate(chain, s, qdot, dt)
    return LeakDemoResult(times, power, cross, W2)
