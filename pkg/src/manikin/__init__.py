"""Passive control sandbox for articulated virtual humans.

First-order damped skeletons driven by task-space springs, with null-space
posture control, LCP joint limits and contacts, passive virtual guides, and
per-port energy auditing that can certify passivity or demonstrate how
projections break it.
"""

from manikin.backend import active_name as active_backend
from manikin.chain import (
    CollisionPoint,
    FrameRef,
    JointSpec,
    KinematicChain,
    LinkSpec,
    SimState,
    forward_kinematics,
    frame_jacobian,
    integrate,
    integrate_field,
    load_chain,
)
from manikin.constraints import (
    ContactSolution,
    HalfSpace,
    Sphere,
    UnilateralConstraint,
    assemble_lcp,
    constraint_torques,
    detect_constraints,
    solve_lcp,
)
from manikin.control import (
    InternalPotential,
    Projection,
    TaskTarget,
    build_internal_projection,
    internal_torque,
    quadratic_posture_potential,
    self_projectivity_residual,
    task_force,
)
from manikin.dynamics import (
    TaskChannel,
    TorqueVector,
    VelocitySolveReport,
    solve_velocity_explicit,
    solve_velocity_implicit,
)
from manikin.guides import (
    GuideCoupling,
    VirtualMechanism,
    axis_error,
    guide_wrenches,
    step_guide,
)
from manikin.passivity import (
    Counterexample,
    PassivityLedger,
    Port,
    build_counterexample,
    passivity_verdict,
    record_step,
    two_port_internal_leak_demo,
)
from manikin.se3 import Transform, pose_error

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
