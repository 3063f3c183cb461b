"""Shared domain types used across the driving stack.

These are deliberately thin containers: invariants are validated on
construction, all math lives in the loss/metric functions and the model
modules that consume them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np
import torch


class ContractViolation(ValueError):
    """Raised when a caller breaks a documented precondition."""


class NavigationCommand(IntEnum):
    """High-level route directive; one planner mode per command."""

    LEFT = 0
    RIGHT = 1
    STRAIGHT = 2
    LANE_FOLLOW = 3
    CHANGE_LANE_LEFT = 4
    CHANGE_LANE_RIGHT = 5

    @property
    def text(self) -> str:
        return _COMMAND_TEXT[self]


_COMMAND_TEXT = {
    NavigationCommand.LEFT: "left",
    NavigationCommand.RIGHT: "right",
    NavigationCommand.STRAIGHT: "straight",
    NavigationCommand.LANE_FOLLOW: "lane follow",
    NavigationCommand.CHANGE_LANE_LEFT: "change lane left",
    NavigationCommand.CHANGE_LANE_RIGHT: "change lane right",
}

COMMAND_FROM_TEXT = {v: k for k, v in _COMMAND_TEXT.items()}


class SpeedDecision(IntEnum):
    KEEP = 0
    ACCELERATE = 1
    DECELERATE = 2

    @property
    def text(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Trajectory:
    """Ego-frame waypoint sequence; waypoint k sits at horizon (k+1)*dt."""

    waypoints: np.ndarray  # (T, 2) meters
    dt: float = 0.5
    origin_time: float = 0.0

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 1:
            raise ContractViolation(f"waypoints must be (T>=1, 2), got {wp.shape}")
        if not np.isfinite(wp).all():
            raise ContractViolation("waypoints must be finite")
        if not self.dt > 0:
            raise ContractViolation(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "waypoints", wp)

    @property
    def horizon(self) -> int:
        return self.waypoints.shape[0]

    def tensor(self) -> torch.Tensor:
        return torch.from_numpy(self.waypoints)


@dataclass(frozen=True)
class MultiModeTrajectory:
    """One trajectory per mode; command-labelled for the 6-mode planner."""

    modes: tuple[Trajectory, ...]
    mode_labels: Optional[tuple[NavigationCommand, ...]] = None

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ContractViolation("need at least one mode")
        if self.mode_labels is not None:
            if sorted(self.mode_labels) != sorted(NavigationCommand):
                raise ContractViolation("mode_labels must enumerate all 6 commands")
            if len(self.mode_labels) != len(self.modes):
                raise ContractViolation("mode_labels length mismatch")

    def __len__(self) -> int:
        return len(self.modes)

    def by_command(self, command: NavigationCommand) -> Trajectory:
        if self.mode_labels is None:
            raise ContractViolation("trajectory set is not command-indexed")
        return self.modes[self.mode_labels.index(command)]

    def stacked(self) -> np.ndarray:
        return np.stack([m.waypoints for m in self.modes])  # (K, T, 2)


@dataclass(frozen=True)
class DiagonalGaussian:
    """Mean / log-variance pair; sigma = exp(log_var / 2) stays positive."""

    mean: torch.Tensor
    log_var: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_var.shape:
            raise ContractViolation(
                f"mean/log_var shapes differ: {self.mean.shape} vs {self.log_var.shape}"
            )

    @property
    def sigma(self) -> torch.Tensor:
        return torch.exp(0.5 * self.log_var)

    def sample(self, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        eps = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype)
        return self.mean + self.sigma * eps


@dataclass
class EgoStatus:
    speed: float  # m/s
    heading: float  # radians
    position: np.ndarray  # world (x, y) meters
    history_positions: np.ndarray  # (H, 2) world, oldest -> newest, 0.5 s apart
    command: NavigationCommand = NavigationCommand.LANE_FOLLOW

    def __post_init__(self):
        if self.speed < 0:
            raise ContractViolation("speed must be >= 0")
        self.position = np.asarray(self.position, dtype=np.float64)
        self.history_positions = np.asarray(self.history_positions, dtype=np.float64).reshape(-1, 2)


LOSS_KEYS = (
    "l_cls", "l_reg", "l_tra", "l_mcls", "l_mreg",
    "l_ce", "l_vae", "l_mse", "l_col", "l_bd",
)


@dataclass
class LossBreakdown:
    """Named leaf loss terms; absent components contribute zero to the total."""

    l_cls: Optional[torch.Tensor] = None
    l_reg: Optional[torch.Tensor] = None
    l_tra: Optional[torch.Tensor] = None
    l_mcls: Optional[torch.Tensor] = None
    l_mreg: Optional[torch.Tensor] = None
    l_ce: Optional[torch.Tensor] = None
    l_vae: Optional[torch.Tensor] = None
    l_mse: Optional[torch.Tensor] = None
    l_col: Optional[torch.Tensor] = None
    l_bd: Optional[torch.Tensor] = None

    def present(self) -> dict[str, torch.Tensor]:
        return {k: getattr(self, k) for k in LOSS_KEYS if getattr(self, k) is not None}

    def total(self, weights: Optional[dict[str, float]] = None) -> torch.Tensor:
        parts = self.present()
        if not parts:
            return torch.zeros(())
        acc = None
        for key, value in parts.items():
            w = 1.0 if weights is None else float(weights.get(key, 1.0))
            term = w * value
            acc = term if acc is None else acc + term
        return acc

    def detach_floats(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.present().items()}

    @staticmethod
    def merge(*parts: "LossBreakdown") -> "LossBreakdown":
        out = LossBreakdown()
        for part in parts:
            for key, value in part.present().items():
                if getattr(out, key) is not None:
                    raise ContractViolation(f"duplicate loss component {key}")
                setattr(out, key, value)
        return out


def ego_frame_transform(
    points_world: np.ndarray, origin: np.ndarray, heading: float
) -> np.ndarray:
    """World (x, y) points into the frame at `origin` facing `heading`."""
    pts = np.asarray(points_world, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    c, s = np.cos(-heading), np.sin(-heading)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T
