"""Path planning and trajectory tracking for the walking robot."""
from .davg import DEFAULT_TURN_WEIGHT, plan_davg, point_in_convex, segment_blocked
from .mpc import reference_inputs, rollout, solve_cfmpc, solve_cfmpc_qp
from .types import (
    NOMINAL_WALK_SPEED,
    MpcConfig,
    MpcSolution,
    Obstacle,
    PlanResult,
    ReferenceTrajectory,
    step_dynamics,
)

__all__ = [
    "DEFAULT_TURN_WEIGHT",
    "NOMINAL_WALK_SPEED",
    "MpcConfig",
    "MpcSolution",
    "Obstacle",
    "PlanResult",
    "ReferenceTrajectory",
    "plan_davg",
    "point_in_convex",
    "reference_inputs",
    "rollout",
    "segment_blocked",
    "solve_cfmpc",
    "solve_cfmpc_qp",
    "step_dynamics",
]
