"""Scene rasterizer and patch encoder producing feature tokens.

Stands in for a multi-view image backbone: the observation is rendered into
an ego-centric occupancy/velocity grid, split into patches, and linearly
embedded. Token positions are a learned per-patch embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..core import ego_frame_transform
from ..simworld import LIGHT_INDEX, LightState, SceneObservation, V_MAX

GRID_X_MIN = -8.0
GRID_X_MAX = 56.0
GRID_Y_MIN = -8.0
GRID_Y_MAX = 8.0
GRID_RES = 2.0
GRID_NX = int((GRID_X_MAX - GRID_X_MIN) / GRID_RES)  # 32
GRID_NY = int((GRID_Y_MAX - GRID_Y_MIN) / GRID_RES)  # 8
N_CHANNELS = 10
# 0 vehicle occ | 1 pedestrian occ | 2 static occ | 3 vx | 4 vy
# 5 red col | 6 green col | 7 yellow col | 8 ego speed | 9 stop proximity
PATCH = 2
N_TOKENS = (GRID_NX // PATCH) * (GRID_NY // PATCH)  # 64


@dataclass
class FeatureTokens:
    tokens: torch.Tensor  # [B, N_f, C_f]
    pos: torch.Tensor  # [N_f, C_f] learned, shared across batch

    def __post_init__(self):
        if not torch.isfinite(self.tokens).all():
            raise ValueError("feature tokens must be finite")


def rasterize(obs: SceneObservation, vel_noise_std: float = 0.0) -> np.ndarray:
    """Render one observation to a (N_CHANNELS, GRID_NY, GRID_NX) grid.

    `vel_noise_std` perturbs agent velocities with the frame's noise_seed so
    single-frame readings understate true motion reproducibly.
    """
    grid = np.zeros((N_CHANNELS, GRID_NY, GRID_NX), dtype=np.float64)
    ego = obs.ego
    rng = np.random.default_rng(obs.noise_seed) if vel_noise_std > 0 else None
    for a in obs.agents:
        rel = ego_frame_transform(a.position[None, :], ego.position, ego.heading)[0]
        ix = int(np.floor((rel[0] - GRID_X_MIN) / GRID_RES))
        iy = int(np.floor((rel[1] - GRID_Y_MIN) / GRID_RES))
        if not (0 <= ix < GRID_NX and 0 <= iy < GRID_NY):
            continue
        ch = {"vehicle": 0, "pedestrian": 1}.get(a.kind, 2)
        grid[ch, iy, ix] += 1.0
        vel = np.asarray(a.velocity, dtype=np.float64)
        if rng is not None:
            vel = vel + rng.normal(0.0, vel_noise_std, size=2)
        c, s = np.cos(-ego.heading), np.sin(-ego.heading)
        vx = c * vel[0] - s * vel[1]
        vy = s * vel[0] + c * vel[1]
        grid[3, iy, ix] += vx / V_MAX
        grid[4, iy, ix] += vy / V_MAX
    if obs.light is not LightState.NONE and obs.light_position is not None:
        rel = ego_frame_transform(
            obs.light_position[None, :], ego.position, ego.heading
        )[0]
        ix = int(np.floor((rel[0] - GRID_X_MIN) / GRID_RES))
        ch = {LightState.RED: 5, LightState.GREEN: 6, LightState.YELLOW: 7}[obs.light]
        if 0 <= ix < GRID_NX:
            grid[ch, :, ix] = 1.0
        grid[9, :, :] = max(0.0, 1.0 - abs(rel[0]) / (GRID_X_MAX - GRID_X_MIN))
    grid[8, :, :] = ego.speed / V_MAX
    return grid


class GridEncoder(nn.Module):
    """Patchify the raster grid and embed patches into N_TOKENS tokens."""

    def __init__(self, c_f: int = 64, vel_noise_std: float = 0.0):
        super().__init__()
        self.c_f = c_f
        self.vel_noise_std = vel_noise_std
        self.embed = nn.Linear(N_CHANNELS * PATCH * PATCH, c_f)
        self.pos = nn.Parameter(torch.randn(N_TOKENS, c_f) * 0.02)

    @property
    def n_tokens(self) -> int:
        return N_TOKENS

    def grids_to_tokens(self, grids: torch.Tensor) -> torch.Tensor:
        # [B, C, H, W] -> [B, n_patches, C*PATCH*PATCH], row-major patch order
        b, c, h, w = grids.shape
        x = grids.reshape(b, c, h // PATCH, PATCH, w // PATCH, PATCH)
        x = x.permute(0, 2, 4, 1, 3, 5).reshape(
            b, (h // PATCH) * (w // PATCH), c * PATCH * PATCH
        )
        return self.embed(x)

    def forward(self, observations: list[SceneObservation]) -> FeatureTokens:
        dtype = self.embed.weight.dtype
        grids = torch.stack(
            [
                torch.from_numpy(rasterize(o, self.vel_noise_std)).to(dtype)
                for o in observations
            ]
        )
        return FeatureTokens(tokens=self.grids_to_tokens(grids), pos=self.pos)


def encode_observation(
    encoder: GridEncoder, obs: SceneObservation
) -> FeatureTokens:
    """Single-observation convenience wrapper (batch of one)."""
    return encoder([obs])
