"""Latent-alignment trajectory VAE.

Two small encoders map the planning token and the GT trajectory to diagonal
Gaussians over a shared latent; a KL term pulls the token-side distribution
toward the trajectory-side one. A GRU decoder unrolls per-step offsets from a
latent draw, conditioned on the navigation command, and the waypoints are the
cumulative sum of those offsets (ego frame).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from deskdrive.core import (
    ContractViolation,
    DiagonalGaussian,
    LossBreakdown,
    NavigationCommand,
    kl_diagonal_gaussian,
)

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


@dataclass(frozen=True)
class PlannerConfig:
    token_dim: int = 64
    d_z: int = 32
    hidden: int = 64
    horizon: int = 4
    n_commands: int = len(NavigationCommand)
    # KL argument order is (state, trajectory); flip to probe the asymmetry.
    kl_reverse: bool = False

    def __post_init__(self):
        if min(self.token_dim, self.d_z, self.hidden, self.horizon) < 1:
            raise ContractViolation("planner dims must be positive")


def kl_warmup_coefficient(step: int, warmup_steps: int) -> float:
    """l_vae weight ramp: 0 -> 1 linearly over the warm-up, then flat at 1."""
    if warmup_steps <= 0:
        return 1.0
    return float(min(1.0, max(0.0, (step + 1) / warmup_steps)))


class TrajectoryVAE(nn.Module):
    def __init__(self, cfg: Optional[PlannerConfig] = None):
        super().__init__()
        self.cfg = cfg or PlannerConfig()
        c = self.cfg
        self.enc_state = nn.Sequential(
            nn.Linear(c.token_dim, c.hidden),
            nn.GELU(),
            nn.Linear(c.hidden, 2 * c.d_z),
        )
        self.enc_traj = nn.Sequential(
            nn.Linear(c.horizon * 2, c.hidden),
            nn.GELU(),
            nn.Linear(c.hidden, 2 * c.d_z),
        )
        self.z_proj = nn.Linear(c.d_z, c.hidden)
        self.cmd_embed = nn.Embedding(c.n_commands, c.hidden)
        self.gru = nn.GRUCell(2, c.hidden)
        self.offset_head = nn.Linear(c.hidden, 2)

    @property
    def _dtype(self) -> torch.dtype:
        return self.offset_head.weight.dtype

    def encode_state(self, s) -> DiagonalGaussian:
        x = state_tensor(s, self.cfg.token_dim, self._dtype)
        mean, log_var = self.enc_state(x).chunk(2, dim=-1)
        return DiagonalGaussian(mean=mean, log_var=log_var)

    def encode_traj(self, t) -> DiagonalGaussian:
        x = traj_tensor(t, self.cfg.horizon, self._dtype)
        mean, log_var = self.enc_traj(x.flatten(1)).chunk(2, dim=-1)
        return DiagonalGaussian(mean=mean, log_var=log_var)

    def _kl(self, g_s: DiagonalGaussian, g_t: DiagonalGaussian) -> torch.Tensor:
        p, q = (g_t, g_s) if self.cfg.kl_reverse else (g_s, g_t)
        return kl_diagonal_gaussian(p, q) / p.mean.shape[0]

    def vae_align_loss(self, s, t) -> torch.Tensor:
        """Batch-mean KL between the token-side and trajectory-side Gaussians."""
        return self._kl(self.encode_state(s), self.encode_traj(t))

    def _z_tensor(self, z) -> torch.Tensor:
        if isinstance(z, LatentSample):
            z = z.z
        z = torch.as_tensor(z, dtype=self._dtype) if not torch.is_tensor(z) else z.to(self._dtype)
        if z.ndim == 1:
            z = z[None]
        if z.ndim != 2 or z.shape[-1] != self.cfg.d_z:
            raise ContractViolation(f"latent must be (B, {self.cfg.d_z}), got {tuple(z.shape)}")
        if not torch.isfinite(z).all():
            raise ContractViolation("latent must be finite")
        return z

    def decode(self, z, command) -> torch.Tensor:
        """Unroll one command-conditioned mode; returns waypoints (B, T, 2)."""
        z = self._z_tensor(z)
        c = command_tensor(command, z.shape[0])
        h = self.z_proj(z) + self.cmd_embed(c)
        x = z.new_zeros(z.shape[0], 2)
        offsets = []
        for _ in range(self.cfg.horizon):
            h = self.gru(x, h)
            x = self.offset_head(h)
            offsets.append(x)
        return torch.cumsum(torch.stack(offsets, dim=1), dim=1)

    def decode_all(self, z) -> torch.Tensor:
        """All command modes from one latent; returns (B, n_commands, T, 2)."""
        z = self._z_tensor(z)
        modes = [self.decode(z, NavigationCommand(c)) for c in range(self.cfg.n_commands)]
        return torch.stack(modes, dim=1)

    def plan(
        self,
        s,
        command,
        mode: str = "eval",
        gt=None,
        agent_futures: Optional[AgentFutures] = None,
        generator: Optional[torch.Generator] = None,
        eps: Optional[torch.Tensor] = None,
    ) -> PlanOutput:
        return self.plan_vae(s, command, mode, gt, agent_futures, generator, eps)

    def plan_vae(
        self,
        s,
        command,
        mode: str = "eval",
        gt=None,
        agent_futures: Optional[AgentFutures] = None,
        generator: Optional[torch.Generator] = None,
        eps: Optional[torch.Tensor] = None,
    ) -> PlanOutput:
        """Plan from a planning token.

        train: z is a reparameterized draw from the token-side Gaussian and the
        four planner losses are computed on the GT-command mode. eval: z is the
        token-side mean, so planning is deterministic; pass a sampled latent
        through `decode` directly to re-enable stochastic planning.
        """
        if mode not in ("train", "eval"):
            raise ContractViolation(f"mode must be train or eval, got {mode!r}")
        x = state_tensor(s, self.cfg.token_dim, self._dtype)
        c = command_tensor(command, x.shape[0])
        g_s = self.encode_state(x)
        if mode == "train":
            if gt is None:
                raise ContractViolation("train mode requires a GT trajectory")
            if eps is None:
                eps = torch.randn(g_s.mean.shape, generator=generator, dtype=g_s.mean.dtype)
            z = g_s.mean + g_s.sigma * eps
        else:
            z = g_s.mean
        all_modes = self.decode_all(z)
        selected = all_modes.gather(
            1, c.view(-1, 1, 1, 1).expand(-1, 1, self.cfg.horizon, 2)
        ).squeeze(1)
        losses = LossBreakdown()
        if mode == "train":
            gt_t = traj_tensor(gt, self.cfg.horizon, self._dtype)
            losses = LossBreakdown(
                l_vae=self._kl(g_s, self.encode_traj(gt_t)),
                l_mse=((selected - gt_t) ** 2).mean(),
                l_col=batched_collision(selected, agent_futures),
                l_bd=batched_boundary(selected),
            )
        return PlanOutput(
            all_modes=all_modes,
            selected=selected,
            mode_index=c,
            losses=losses,
            latent=z,
        )
