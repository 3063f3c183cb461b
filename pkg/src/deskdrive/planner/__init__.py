from .base import (
    AgentFutures,
    LatentSample,
    PlanOutput,
    batched_boundary,
    batched_collision,
    command_tensor,
    state_tensor,
    traj_tensor,
)
from .vae import PlannerConfig, TrajectoryVAE, kl_warmup_coefficient
from .diffusion import (
    ANCHOR_FORMAT,
    AnchorSet,
    DiffusionConfig,
    DiffusionPlanner,
    fit_anchors,
)

__all__ = [
    "ANCHOR_FORMAT",
    "AgentFutures",
    "AnchorSet",
    "DiffusionConfig",
    "DiffusionPlanner",
    "LatentSample",
    "PlanOutput",
    "PlannerConfig",
    "TrajectoryVAE",
    "batched_boundary",
    "batched_collision",
    "command_tensor",
    "fit_anchors",
    "kl_warmup_coefficient",
    "state_tensor",
    "traj_tensor",
]
