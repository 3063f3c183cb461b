"""Anchor-based diffusion planner.

K-means over training GT trajectories gives a fixed prior of anchor modes; a
small conditional denoiser learns the offset of the GT from its nearest
anchor via standard noise prediction on a linear beta schedule. Inference
runs a deterministic reverse chain (eta = 0, zero start) once per anchor and
a classifier head picks the mode to execute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from deskdrive.core import ContractViolation, LossBreakdown, Trajectory, focal_ce

from .base import (
    AgentFutures,
    PlanOutput,
    batched_boundary,
    batched_collision,
    state_tensor,
    traj_tensor,
)

ANCHOR_FORMAT = "anchors/1"


@dataclass(frozen=True)
class AnchorSet:
    anchors: np.ndarray  # (K, T, 2)

    def __post_init__(self):
        a = np.asarray(self.anchors, dtype=np.float64)
        if a.ndim != 3 or a.shape[0] < 1 or a.shape[2] != 2:
            raise ContractViolation(f"anchors must be (K, T, 2), got {a.shape}")
        if not np.isfinite(a).all():
            raise ContractViolation("anchors must be finite")
        object.__setattr__(self, "anchors", a)

    @property
    def k(self) -> int:
        return self.anchors.shape[0]

    @property
    def horizon(self) -> int:
        return self.anchors.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": ANCHOR_FORMAT,
                "k": self.k,
                "horizon": self.horizon,
                "anchors": self.anchors.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "AnchorSet":
        data = json.loads(text)
        if data.get("format") != ANCHOR_FORMAT:
            raise ContractViolation(f"unsupported anchor format {data.get('format')!r}")
        a = np.asarray(data["anchors"], dtype=np.float64)
        if a.shape != (data["k"], data["horizon"], 2):
            raise ContractViolation("anchor payload shape disagrees with metadata")
        return cls(anchors=a)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "AnchorSet":
        return cls.from_json(Path(path).read_text())


def _flatten_trajs(gt_trajs: Sequence) -> np.ndarray:
    rows = []
    for t in gt_trajs:
        w = t.waypoints if isinstance(t, Trajectory) else np.asarray(t, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != 2:
            raise ContractViolation(f"trajectory must be (T, 2), got {w.shape}")
        rows.append(w.reshape(-1))
    if not rows:
        raise ContractViolation("need at least one trajectory")
    if len({r.shape[0] for r in rows}) != 1:
        raise ContractViolation("trajectories must share one horizon")
    return np.stack(rows).astype(np.float64)


def _kmeans_pp_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[int(rng.integers(x.shape[0]))]]
    for _ in range(k - 1):
        d2 = ((x[:, None] - np.stack(centers)[None]) ** 2).sum(-1).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            centers.append(x[int(rng.integers(x.shape[0]))])
        else:
            centers.append(x[int(rng.choice(x.shape[0], p=d2 / total))])
    return np.stack(centers)


def fit_anchors(gt_trajs: Sequence, k: int = 20, seed: int = 0, max_iter: int = 100) -> AnchorSet:
    """Lloyd's K-means with K-means++ seeding on flattened waypoints."""
    x = _flatten_trajs(gt_trajs)
    n = x.shape[0]
    if k < 1 or n < k:
        raise ContractViolation(f"need at least k={k} trajectories, got {n}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_seed(x, k, rng)
    assign = None
    for _ in range(max_iter):
        d2 = ((x[:, None] - centers[None]) ** 2).sum(-1)  # (N, K)
        new_assign = d2.argmin(axis=1)
        taken: set[int] = set()
        for j in range(k):
            if (new_assign == j).any():
                continue
            # Empty cluster seizes the point farthest from its own center.
            cur = d2[np.arange(n), new_assign].copy()
            if taken:
                cur[list(taken)] = -1.0
            far = int(cur.argmax())
            new_assign[far] = j
            taken.add(far)
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
        centers = np.stack([x[assign == j].mean(axis=0) for j in range(k)])
    horizon = x.shape[1] // 2
    return AnchorSet(anchors=centers.reshape(k, horizon, 2))


@dataclass(frozen=True)
class DiffusionConfig:
    token_dim: int = 64
    horizon: int = 4
    n_modes: int = 20
    n_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    hidden: int = 128
    t_embed_dim: int = 32

    def __post_init__(self):
        if min(self.token_dim, self.horizon, self.n_modes, self.n_steps) < 1:
            raise ContractViolation("diffusion dims must be positive")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ContractViolation("beta schedule must satisfy 0 < start <= end < 1")


class DiffusionPlanner(nn.Module):
    def __init__(self, cfg: Optional[DiffusionConfig] = None, anchors: Optional[AnchorSet] = None):
        super().__init__()
        self.cfg = cfg or DiffusionConfig()
        c = self.cfg
        betas = torch.linspace(c.beta_start, c.beta_end, c.n_steps)
        self.register_buffer("betas", betas)
        self.register_buffer("alpha_bars", torch.cumprod(1.0 - betas, dim=0))
        self.register_buffer("anchor_buf", torch.full((c.n_modes, c.horizon, 2), float("nan")))
        self.t_embed = nn.Embedding(c.n_steps, c.t_embed_dim)
        flat = c.horizon * 2
        self.denoiser = nn.Sequential(
            nn.Linear(flat + c.token_dim + flat + c.t_embed_dim, c.hidden),
            nn.GELU(),
            nn.Linear(c.hidden, c.hidden),
            nn.GELU(),
            nn.Linear(c.hidden, flat),
        )
        self.classifier = nn.Sequential(
            nn.Linear(c.token_dim + flat, c.hidden),
            nn.GELU(),
            nn.Linear(c.hidden, 1),
        )
        if anchors is not None:
            self.set_anchors(anchors)

    @property
    def _dtype(self) -> torch.dtype:
        return self.t_embed.weight.dtype

    @property
    def has_anchors(self) -> bool:
        return bool(torch.isfinite(self.anchor_buf).all())

    def set_anchors(self, anchors: AnchorSet) -> None:
        if anchors.k != self.cfg.n_modes or anchors.horizon != self.cfg.horizon:
            raise ContractViolation(
                f"anchor set ({anchors.k}, {anchors.horizon}) does not match "
                f"configured ({self.cfg.n_modes}, {self.cfg.horizon})"
            )
        with torch.no_grad():
            self.anchor_buf.copy_(torch.from_numpy(anchors.anchors).to(self.anchor_buf.dtype))

    def anchor_set(self) -> AnchorSet:
        if not self.has_anchors:
            raise ContractViolation("no anchors set")
        return AnchorSet(anchors=self.anchor_buf.detach().cpu().double().numpy())

    def _anchor_tensor(self, anchors) -> torch.Tensor:
        if anchors is None:
            if not self.has_anchors:
                raise ContractViolation("diffusion planner requires anchors")
            return self.anchor_buf.to(self._dtype)
        if isinstance(anchors, AnchorSet):
            if anchors.k != self.cfg.n_modes or anchors.horizon != self.cfg.horizon:
                raise ContractViolation(
                    f"anchor set ({anchors.k}, {anchors.horizon}) does not match "
                    f"configured ({self.cfg.n_modes}, {self.cfg.horizon})"
                )
            return torch.from_numpy(anchors.anchors).to(self._dtype)
        raise ContractViolation("anchors must be an AnchorSet or None")

    def predict_noise(
        self, x_t: torch.Tensor, t: torch.Tensor, s: torch.Tensor, anchor_flat: torch.Tensor
    ) -> torch.Tensor:
        return self.denoiser(torch.cat([x_t, s, anchor_flat, self.t_embed(t)], dim=-1))

    def score_modes(self, s: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
        """Classifier logits over modes; (B, C) x (K, T, 2) -> (B, K)."""
        b, k = s.shape[0], anchors.shape[0]
        a_flat = anchors.reshape(k, -1)[None].expand(b, -1, -1)
        s_rep = s[:, None].expand(-1, k, -1)
        return self.classifier(torch.cat([s_rep, a_flat], dim=-1)).squeeze(-1)

    def reverse_chain(
        self, x_start: torch.Tensor, s: torch.Tensor, anchor_flat: torch.Tensor
    ) -> torch.Tensor:
        """Deterministic (eta = 0) reverse pass from step N-1 down to 0."""
        x = x_start
        for step in range(self.cfg.n_steps - 1, -1, -1):
            t = torch.full((x.shape[0],), step, dtype=torch.long, device=x.device)
            eps_hat = self.predict_noise(x, t, s, anchor_flat)
            abar = self.alpha_bars[step]
            x0_hat = (x - torch.sqrt(1.0 - abar) * eps_hat) / torch.sqrt(abar)
            if step == 0:
                x = x0_hat
            else:
                abar_prev = self.alpha_bars[step - 1]
                x = torch.sqrt(abar_prev) * x0_hat + torch.sqrt(1.0 - abar_prev) * eps_hat
        return x

    def plan(
        self,
        s,
        command=None,
        mode: str = "eval",
        gt=None,
        agent_futures: Optional[AgentFutures] = None,
        generator: Optional[torch.Generator] = None,
        eps: Optional[torch.Tensor] = None,
        t: Optional[torch.Tensor] = None,
        sample: bool = False,
    ) -> PlanOutput:
        # The command is accepted for interface parity but the mode choice is
        # score-based: anchors, not commands, index the 20 modes.
        return self.plan_diffusion(
            s, None, mode, gt=gt, agent_futures=agent_futures, generator=generator,
            eps=eps, t=t, sample=sample,
        )

    def plan_diffusion(
        self,
        s,
        anchors,
        mode: str = "eval",
        gt=None,
        agent_futures: Optional[AgentFutures] = None,
        generator: Optional[torch.Generator] = None,
        eps: Optional[torch.Tensor] = None,
        t: Optional[torch.Tensor] = None,
        sample: bool = False,
    ) -> PlanOutput:
        """Plan against an anchor prior.

        train: noise-prediction MSE at a uniformly drawn step plus focal on the
        mode scores (folded into l_mse), with l_col/l_bd on the one-step
        reconstruction of the winning (nearest-to-GT) mode. eval: full reverse
        chain per anchor from a zero start, classifier picks the executed mode;
        `sample=True` re-enables a stochastic chain start.
        """
        if mode not in ("train", "eval"):
            raise ContractViolation(f"mode must be train or eval, got {mode!r}")
        x = state_tensor(s, self.cfg.token_dim, self._dtype)
        a = self._anchor_tensor(anchors)  # (K, T, 2)
        b, k = x.shape[0], a.shape[0]
        flat = self.cfg.horizon * 2
        if mode == "train":
            if gt is None:
                raise ContractViolation("train mode requires a GT trajectory")
            gt_t = traj_tensor(gt, self.cfg.horizon, self._dtype)
            with torch.no_grad():
                dists = ((gt_t[:, None] - a[None]) ** 2).sum(-1).mean(-1)  # (B, K)
                winner = dists.argmin(dim=1)
            anchor_w = a[winner]  # (B, T, 2)
            x0 = (gt_t - anchor_w).reshape(b, flat)
            if t is None:
                t = torch.randint(0, self.cfg.n_steps, (b,), generator=generator)
            if eps is None:
                eps = torch.randn(b, flat, generator=generator, dtype=x0.dtype)
            abar = self.alpha_bars[t][:, None]
            x_t = torch.sqrt(abar) * x0 + torch.sqrt(1.0 - abar) * eps
            eps_hat = self.predict_noise(x_t, t, x, anchor_w.reshape(b, flat))
            noise_mse = ((eps_hat - eps) ** 2).mean()
            scores = self.score_modes(x, a)
            x0_hat = (x_t - torch.sqrt(1.0 - abar) * eps_hat) / torch.sqrt(abar)
            traj_hat = anchor_w + x0_hat.reshape(b, self.cfg.horizon, 2)
            losses = LossBreakdown(
                l_mse=noise_mse + focal_ce(scores, winner),
                l_col=batched_collision(traj_hat, agent_futures),
                l_bd=batched_boundary(traj_hat),
            )
            return PlanOutput(
                all_modes=a[None].expand(b, -1, -1, -1),
                selected=traj_hat,
                mode_index=winner,
                losses=losses,
                scores=scores,
            )
        # eval: one reverse chain per anchor, K folded into the batch.
        a_flat = a.reshape(k, flat)
        s_rep = x[:, None].expand(-1, k, -1).reshape(b * k, -1)
        a_rep = a_flat[None].expand(b, -1, -1).reshape(b * k, flat)
        if sample:
            x_start = torch.randn(b * k, flat, generator=generator, dtype=x.dtype)
        else:
            x_start = x.new_zeros(b * k, flat)
        offsets = self.reverse_chain(x_start, s_rep, a_rep)
        trajs = a[None] + offsets.reshape(b, k, self.cfg.horizon, 2)
        scores = self.score_modes(x, a)
        winner = scores.argmax(dim=1)
        selected = trajs.gather(
            1, winner.view(-1, 1, 1, 1).expand(-1, 1, self.cfg.horizon, 2)
        ).squeeze(1)
        return PlanOutput(
            all_modes=trajs,
            selected=selected,
            mode_index=winner,
            losses=LossBreakdown(),
            scores=scores,
        )
