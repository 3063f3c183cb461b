from .types import (
    COMMAND_FROM_TEXT,
    ContractViolation,
    DiagonalGaussian,
    EgoStatus,
    LOSS_KEYS,
    LossBreakdown,
    MultiModeTrajectory,
    NavigationCommand,
    SpeedDecision,
    Trajectory,
    ego_frame_transform,
)
from .losses import (
    EPS,
    boundary_loss,
    collision_loss,
    focal_ce,
    focal_loss,
    kl_diagonal_gaussian,
    trajectory_mse,
)
from .metrics import avg_l2, l2_per_horizon
from .gradcheck import central_diff, check_gradients, max_gradcheck_error

__all__ = [
    "COMMAND_FROM_TEXT",
    "ContractViolation",
    "DiagonalGaussian",
    "EgoStatus",
    "LOSS_KEYS",
    "LossBreakdown",
    "MultiModeTrajectory",
    "NavigationCommand",
    "SpeedDecision",
    "Trajectory",
    "ego_frame_transform",
    "EPS",
    "boundary_loss",
    "collision_loss",
    "focal_ce",
    "focal_loss",
    "kl_diagonal_gaussian",
    "trajectory_mse",
    "avg_l2",
    "l2_per_horizon",
    "central_diff",
    "check_gradients",
    "max_gradcheck_error",
]
