"""FIFO long-term memory bank and relative timestamp embeddings."""

from __future__ import annotations

import torch
from torch import nn

from ..core import ContractViolation


class MemoryBank:
    """Ring buffer of detached history-query snapshots, oldest first.

    One slot per pushed frame: (tensor [B, N_h, C_q], frame_time). Slot times
    are strictly increasing; pushing past capacity evicts the oldest slot.
    A bank is per-episode mutable state and must never be shared between
    concurrently running episodes.
    """

    def __init__(self, capacity: int = 16):
        if capacity < 1:
            raise ContractViolation(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.slots: list[tuple[torch.Tensor, int]] = []

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def times(self) -> list[int]:
        return [t for _, t in self.slots]

    def push(self, queries: torch.Tensor, frame_time: int) -> None:
        if self.slots and frame_time <= self.slots[-1][1]:
            raise ContractViolation(
                f"frame_time {frame_time} not after newest slot {self.slots[-1][1]}"
            )
        # gradients do not flow across frames through the bank
        self.slots.append((queries.detach(), int(frame_time)))
        if len(self.slots) > self.capacity:
            self.slots.pop(0)

    def stacked(self, frame_time: int) -> tuple[torch.Tensor, torch.Tensor]:
        """All slots as one key/value set.

        Returns (memory [B, m*N_h, C_q], ages [m*N_h] of relative age per row,
        clamped to capacity). Caller must ensure the bank is non-empty.
        """
        if not self.slots:
            raise ContractViolation("stacked() on an empty bank")
        mem = torch.cat([q for q, _ in self.slots], dim=1)
        n_h = self.slots[0][0].shape[1]
        ages = []
        for _, t in self.slots:
            age = min(max(frame_time - t, 1), self.capacity)
            ages.extend([age] * n_h)
        return mem, torch.as_tensor(ages, dtype=torch.long, device=mem.device)

    def reset(self) -> "MemoryBank":
        self.slots.clear()
        return self


class TimestampEmbedding(nn.Module):
    """Learned embedding of relative slot age, ages 1..capacity."""

    def __init__(self, capacity: int, dim: int):
        super().__init__()
        self.capacity = capacity
        self.table = nn.Embedding(capacity, dim)
        nn.init.normal_(self.table.weight, std=0.02)

    def forward(self, ages: torch.Tensor) -> torch.Tensor:
        if (ages < 1).any() or (ages > self.capacity).any():
            raise ContractViolation("relative age outside 1..capacity")
        return self.table(ages - 1)
