"""Query-based temporal transformer with a FIFO long-term memory.

Per-frame flow:
  (a) joint self-attention over [scene; perception] queries
  (b) cross-attention of both against feature tokens (+ positional encoding)
  (c) perception heads on the updated perception queries
  (d) history queries cross-attend the memory (+ timestamp embedding),
      skipped while the memory is empty
  (e) history queries cross-attend the updated scene queries
  (f) the result is pushed into the memory (FIFO, detached)
  (g) two-layer MLPs project scene / history queries into reasoning space
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..core import ContractViolation
from .encoder import FeatureTokens
from .heads import PerceptionHeads, PerceptionOutput
from .memory import MemoryBank, TimestampEmbedding


@dataclass
class QTFormerConfig:
    n_scene: int = 32
    n_perception: int = 32
    n_history: int = 8
    c_q: int = 64
    c_out: int = 64  # reasoning dimension
    n_heads: int = 2
    memory_slots: int = 16
    k_motion: int = 3
    motion_horizon: int = 4
    ffn_mult: int = 4


@dataclass
class QTOutput:
    scene_tokens: torch.Tensor  # [B, N_s, C]
    history_tokens: torch.Tensor  # [B, N_h, C] ([B, 0, C] when disabled)
    perception: PerceptionOutput
    memory: MemoryBank


class SelfAttentionBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_mult: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm_ffn = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim), nn.GELU(), nn.Linear(ffn_mult * dim, dim)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.ffn(self.norm_ffn(x))


class CrossAttentionBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_mult: int):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm_ffn = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim), nn.GELU(), nn.Linear(ffn_mult * dim, dim)
        )

    def forward(self, q: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        k = self.norm_kv(kv)
        q = q + self.attn(self.norm_q(q), k, k, need_weights=False)[0]
        return q + self.ffn(self.norm_ffn(q))


class QTFormer(nn.Module):
    def __init__(self, cfg: QTFormerConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg if cfg is not None else QTFormerConfig()
        self.scene_queries = nn.Parameter(torch.randn(cfg.n_scene, cfg.c_q) * 0.02)
        self.perception_queries = nn.Parameter(
            torch.randn(cfg.n_perception, cfg.c_q) * 0.02
        )
        self.sa_joint = SelfAttentionBlock(cfg.c_q, cfg.n_heads, cfg.ffn_mult)
        self.ca_image = CrossAttentionBlock(cfg.c_q, cfg.n_heads, cfg.ffn_mult)
        self.heads = PerceptionHeads(cfg.c_q, cfg.k_motion, cfg.motion_horizon)
        if cfg.n_history > 0:
            self.history_queries = nn.Parameter(
                torch.randn(cfg.n_history, cfg.c_q) * 0.02
            )
            self.ca_memory = CrossAttentionBlock(cfg.c_q, cfg.n_heads, cfg.ffn_mult)
            self.ca_scene = CrossAttentionBlock(cfg.c_q, cfg.n_heads, cfg.ffn_mult)
            self.ts_embed = TimestampEmbedding(cfg.memory_slots, cfg.c_q)
        self.proj_scene = nn.Sequential(
            nn.Linear(cfg.c_q, cfg.c_q), nn.GELU(), nn.Linear(cfg.c_q, cfg.c_out)
        )
        self.proj_history = nn.Sequential(
            nn.Linear(cfg.c_q, cfg.c_q), nn.GELU(), nn.Linear(cfg.c_q, cfg.c_out)
        )

    def new_memory(self) -> MemoryBank:
        return MemoryBank(self.cfg.memory_slots)

    def forward(
        self, feats: FeatureTokens, memory: MemoryBank, frame_time: int
    ) -> QTOutput:
        cfg = self.cfg
        if memory.slots and frame_time <= memory.times[-1]:
            raise ContractViolation(
                f"frame_time {frame_time} not after newest memory slot"
            )
        b = feats.tokens.shape[0]
        qs = self.scene_queries.unsqueeze(0).expand(b, -1, -1)
        qp = self.perception_queries.unsqueeze(0).expand(b, -1, -1)
        x = torch.cat([qs, qp], dim=1)
        x = self.sa_joint(x)  # (a)
        kv = feats.tokens + feats.pos.unsqueeze(0)
        x = self.ca_image(x, kv)  # (b)
        qs, qp = x[:, : cfg.n_scene], x[:, cfg.n_scene :]
        perception = self.heads(qp)  # (c)
        if cfg.n_history > 0:
            qh = self.history_queries.unsqueeze(0).expand(b, -1, -1)
            if len(memory) > 0:  # (d), skipped on cold start
                mem, ages = memory.stacked(frame_time)
                kv_m = mem + self.ts_embed(ages).unsqueeze(0)
                qh = self.ca_memory(qh, kv_m)
            qh_hat = self.ca_scene(qh, qs)  # (e)
            memory.push(qh_hat, frame_time)  # (f)
            x_h = self.proj_history(qh_hat)  # (g)
        else:
            x_h = feats.tokens.new_zeros(b, 0, cfg.c_out)
        x_s = self.proj_scene(qs)
        return QTOutput(
            scene_tokens=x_s, history_tokens=x_h, perception=perception, memory=memory
        )


def reset_memory(memory: MemoryBank) -> MemoryBank:
    return memory.reset()
