"""Differentiable loss primitives shared by the perception, reasoner and
planner heads.

Everything here is a pure function over tensors (Trajectory inputs are
converted); gradients flow to any tensor argument that requires them.
"""

from __future__ import annotations

from typing import Sequence, Union

import torch

from .types import ContractViolation, DiagonalGaussian, Trajectory

EPS = 1e-7  # probability clamp for all log-based losses

TrajLike = Union[Trajectory, torch.Tensor]


def _as_waypoints(t: TrajLike) -> torch.Tensor:
    if isinstance(t, Trajectory):
        return t.tensor()
    wp = t
    if wp.ndim != 2 or wp.shape[-1] != 2:
        raise ContractViolation(f"expected (T, 2) waypoints, got {tuple(wp.shape)}")
    return wp


def _check_aligned(pred: TrajLike, gt: TrajLike) -> tuple[torch.Tensor, torch.Tensor]:
    p, g = _as_waypoints(pred), _as_waypoints(gt)
    if p.shape != g.shape:
        raise ContractViolation(f"horizon mismatch: {tuple(p.shape)} vs {tuple(g.shape)}")
    if isinstance(pred, Trajectory) and isinstance(gt, Trajectory) and pred.dt != gt.dt:
        raise ContractViolation(f"dt mismatch: {pred.dt} vs {gt.dt}")
    return p, g


def kl_diagonal_gaussian(p: DiagonalGaussian, q: DiagonalGaussian) -> torch.Tensor:
    """KL(p || q) between diagonal Gaussians, summed over dimensions."""
    if p.mean.shape != q.mean.shape:
        raise ContractViolation(
            f"dimension mismatch: {tuple(p.mean.shape)} vs {tuple(q.mean.shape)}"
        )
    log_ratio = 0.5 * (q.log_var - p.log_var)  # log(sigma_q / sigma_p)
    var_p = torch.exp(p.log_var)
    var_q = torch.exp(q.log_var)
    quad = (var_p + (p.mean - q.mean) ** 2) / (2.0 * var_q)
    return (log_ratio + quad - 0.5).sum()


def focal_loss(
    prob_positive: torch.Tensor,
    is_positive: bool,
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> torch.Tensor:
    """Binary focal term -alpha * (1 - p_t)^gamma * log(p_t)."""
    p = prob_positive if torch.is_tensor(prob_positive) else torch.as_tensor(prob_positive, dtype=torch.float64)
    p_t = p if is_positive else 1.0 - p
    p_t = p_t.clamp(min=EPS)
    return -alpha * (1.0 - p_t) ** gamma * torch.log(p_t)


def focal_ce(
    logits: torch.Tensor,
    target: torch.Tensor,
    alpha: float = 0.25,
    gamma: float = 2.0,
    alpha_by_class: Sequence[float] | None = None,
) -> torch.Tensor:
    """Multi-class focal cross-entropy, mean over the batch dimension.

    `alpha_by_class` lets detection down-weight the background class
    (RetinaNet-style alpha on foreground, 1 - alpha on background).
    """
    if logits.ndim == 1:
        logits = logits[None]
        target = target.reshape(1)
    logp = torch.log_softmax(logits, dim=-1)
    logp_t = logp.gather(-1, target[:, None]).squeeze(-1)
    p_t = torch.exp(logp_t).clamp(min=EPS)
    if alpha_by_class is not None:
        a = torch.as_tensor(alpha_by_class, dtype=logits.dtype)[target]
    else:
        a = torch.full_like(p_t, alpha)
    loss = -a * (1.0 - p_t) ** gamma * torch.log(p_t)
    return loss.mean()


def trajectory_mse(pred: TrajLike, gt: TrajLike) -> torch.Tensor:
    """Mean squared coordinate error over all waypoints and both axes."""
    p, g = _check_aligned(pred, gt)
    return ((p - g) ** 2).mean()


def collision_loss(
    pred: TrajLike,
    agent_futures: Sequence[tuple[TrajLike, float]],
    ego_radius: float = 1.0,
    margin: float = 0.5,
) -> torch.Tensor:
    """Squared hinge on circle clearance against each agent's future."""
    p = _as_waypoints(pred)
    total = p.new_zeros(())
    for agent_traj, agent_radius in agent_futures:
        a = _as_waypoints(agent_traj)
        if a.shape != p.shape:
            raise ContractViolation("agent future not time-aligned with prediction")
        dist = torch.linalg.norm(p - a, dim=-1)
        gap = (ego_radius + agent_radius + margin) - dist
        total = total + (gap.clamp(min=0.0) ** 2).sum()
    return total


def boundary_loss(
    pred: TrajLike,
    lane_half_width: float = 3.5,
    margin: float = 0.5,
) -> torch.Tensor:
    """Squared hinge on lateral offset beyond the soft corridor edge."""
    p = _as_waypoints(pred)
    excess = p[:, 1].abs() - (lane_half_width - margin)
    return (excess.clamp(min=0.0) ** 2).sum()
