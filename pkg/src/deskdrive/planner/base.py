"""Shared planner interface: batched tensors in, PlanOutput out.

Both generative planners (latent-alignment VAE and anchor diffusion) return
the same output type and the same loss keys modulo l_vae, so swapping one for
the other is a config change, not a code change.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch

from deskdrive.core import (
    ContractViolation,
    LossBreakdown,
    MultiModeTrajectory,
    NavigationCommand,
    Trajectory,
    collision_loss,
)

# One (trajectory, radius) pair per surrounding agent, per batch sample.
AgentFutures = Sequence[Sequence[tuple]]


@dataclass(frozen=True)
class LatentSample:
    """A draw from the planning latent space."""

    z: torch.Tensor  # (B, D_z)

    def __post_init__(self):
        if self.z.ndim != 2:
            raise ContractViolation(f"latent must be (B, D_z), got {tuple(self.z.shape)}")
        if not torch.isfinite(self.z).all():
            raise ContractViolation("latent must be finite")


@dataclass
class PlanOutput:
    """Planner result for one batch.

    all_modes carries every candidate trajectory; selected is the executed one
    (GT-command mode in training, command- or score-selected at inference).
    In diffusion training all_modes holds the anchor priors, since the reverse
    chains only run at inference.
    """

    all_modes: torch.Tensor  # (B, K, T, 2)
    selected: torch.Tensor  # (B, T, 2)
    mode_index: torch.Tensor  # (B,) long
    losses: LossBreakdown
    latent: Optional[torch.Tensor] = None  # (B, D_z), VAE only
    scores: Optional[torch.Tensor] = None  # (B, K), diffusion only

    def mode_set(self, index: int = 0, command_labelled: bool = False) -> MultiModeTrajectory:
        """Materialize sample `index` as a domain trajectory set."""
        modes = self.all_modes[index].detach().cpu().double().numpy()
        labels = tuple(NavigationCommand) if command_labelled else None
        return MultiModeTrajectory(
            modes=tuple(Trajectory(waypoints=m) for m in modes),
            mode_labels=labels,
        )


def state_tensor(s, dim: int, dtype: torch.dtype) -> torch.Tensor:
    """Normalize a planning token (or raw tensor) to a (B, C) float tensor."""
    emb = getattr(s, "embedding", s)
    t = torch.as_tensor(emb, dtype=dtype) if not torch.is_tensor(emb) else emb.to(dtype)
    if t.ndim == 1:
        t = t[None]
    if t.ndim != 2 or t.shape[-1] != dim:
        raise ContractViolation(f"planning token must be (B, {dim}), got {tuple(t.shape)}")
    return t


def traj_tensor(t, horizon: int, dtype: torch.dtype) -> torch.Tensor:
    """Normalize a Trajectory / array to a (B, T, 2) float tensor."""
    if isinstance(t, Trajectory):
        t = t.tensor()
    x = torch.as_tensor(t, dtype=dtype) if not torch.is_tensor(t) else t.to(dtype)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != horizon or x.shape[2] != 2:
        raise ContractViolation(f"trajectory must be (B, {horizon}, 2), got {tuple(x.shape)}")
    return x


def command_tensor(command, batch: int) -> torch.Tensor:
    """Normalize a command (or per-sample command tensor) to a (B,) long tensor."""
    if isinstance(command, NavigationCommand):
        c = torch.full((batch,), int(command), dtype=torch.long)
    else:
        c = torch.as_tensor(command, dtype=torch.long)
        if c.ndim == 0:
            c = c[None].expand(batch)
    if c.shape != (batch,):
        raise ContractViolation(f"command must be scalar or ({batch},), got {tuple(c.shape)}")
    if bool((c < 0).any()) or bool((c >= len(NavigationCommand)).any()):
        raise ContractViolation("command index out of range")
    return c


def batched_boundary(pred: torch.Tensor, lane_half_width: float = 3.5, margin: float = 0.5) -> torch.Tensor:
    """Mean over the batch of the per-sample corridor hinge."""
    excess = pred[..., 1].abs() - (lane_half_width - margin)
    return (excess.clamp(min=0.0) ** 2).sum(dim=-1).mean()


def batched_collision(
    pred: torch.Tensor,
    agent_futures: Optional[AgentFutures],
    ego_radius: float = 1.0,
    margin: float = 0.5,
) -> torch.Tensor:
    """Mean over the batch of the per-sample clearance hinge."""
    if agent_futures is None:
        return pred.new_zeros(())
    if len(agent_futures) != pred.shape[0]:
        raise ContractViolation(
            f"agent_futures covers {len(agent_futures)} samples, batch is {pred.shape[0]}"
        )
    total = pred.new_zeros(())
    for i, futures in enumerate(agent_futures):
        total = total + collision_loss(pred[i], futures, ego_radius=ego_radius, margin=margin)
    return total / pred.shape[0]
