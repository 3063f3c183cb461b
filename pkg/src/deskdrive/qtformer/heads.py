"""Auxiliary perception heads applied to the perception queries."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

OBJECT_CLASSES = ("vehicle", "pedestrian", "light", "none")
NONE_CLASS = OBJECT_CLASSES.index("none")
BOX_DIM = 5  # (x, y, w, l, heading), ego frame


@dataclass
class PerceptionOutput:
    class_logits: torch.Tensor  # [B, N_p, 4]
    boxes: torch.Tensor  # [B, N_p, 5]
    traffic_state_logits: torch.Tensor  # [B, 4] over {none, red, green, yellow}
    motion_logits: torch.Tensor  # [B, N_p, K_m]
    motion_traj: torch.Tensor  # [B, N_p, K_m, H, 2]


def _mlp(dim_in: int, dim_out: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(dim_in, hidden), nn.GELU(), nn.Linear(hidden, dim_out)
    )


class PerceptionHeads(nn.Module):
    def __init__(self, c_q: int, k_motion: int = 3, horizon: int = 4):
        super().__init__()
        self.k_motion = k_motion
        self.horizon = horizon
        self.cls_head = _mlp(c_q, len(OBJECT_CLASSES), c_q)
        self.box_head = _mlp(c_q, BOX_DIM, c_q)
        self.traffic_head = _mlp(c_q, 4, c_q)
        self.motion_cls_head = _mlp(c_q, k_motion, c_q)
        self.motion_reg_head = _mlp(c_q, k_motion * horizon * 2, c_q)

    def forward(self, perception_queries: torch.Tensor) -> PerceptionOutput:
        b, n_p, _ = perception_queries.shape
        pooled = perception_queries.mean(dim=1)
        return PerceptionOutput(
            class_logits=self.cls_head(perception_queries),
            boxes=self.box_head(perception_queries),
            traffic_state_logits=self.traffic_head(pooled),
            motion_logits=self.motion_cls_head(perception_queries),
            motion_traj=self.motion_reg_head(perception_queries).reshape(
                b, n_p, self.k_motion, self.horizon, 2
            ),
        )
