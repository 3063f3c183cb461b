"""Critical-object selection from a single observation.

Four selection rules, each contributing a reason tag; an object appears once
with every reason that applies. Positions and velocities are reported in the
ego frame (forward = +x).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import ContractViolation, ego_frame_transform

REASONS = ("ttc_collision", "lead_vehicle", "active_signal", "vru")

TTC_HORIZON = 3.0  # s, rule-1 extrapolation window
VRU_RADIUS = 20.0  # m, rule-4 pedestrian radius
HALF_LANE = 1.1  # m, rule-2 lateral gate around each lane center
LANE_SPACING = 2.2  # m, offset of the adjacent lane centers
EGO_RADIUS = 1.0  # m, matches the simulator's ego collision circle


@dataclass(frozen=True)
class CriticalObject:
    id: str
    kind: str
    reasons: tuple[str, ...]
    position_3d: np.ndarray  # ego-frame (x, y) meters
    velocity: np.ndarray  # ego-frame (vx, vy) m/s
    bbox_2d: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        if not self.reasons:
            raise ContractViolation("critical object needs at least one reason")
        bad = [r for r in self.reasons if r not in REASONS]
        if bad:
            raise ContractViolation(f"unknown reasons {bad}")
        if len(set(self.reasons)) != len(self.reasons):
            raise ContractViolation("duplicate reasons")


def min_clearance(
    rel_pos: np.ndarray, rel_vel: np.ndarray, radius_sum: float, horizon: float = TTC_HORIZON
) -> tuple[float, float]:
    """(t*, clearance at t*) minimizing center distance over [0, horizon].

    |p + v t|^2 is quadratic in t, so the constrained minimum sits at the
    unconstrained vertex clamped into the window.
    """
    p = np.asarray(rel_pos, dtype=np.float64)
    v = np.asarray(rel_vel, dtype=np.float64)
    vv = float(v @ v)
    t_star = 0.0 if vv <= 0.0 else float(np.clip(-(p @ v) / vv, 0.0, horizon))
    return t_star, float(np.linalg.norm(p + v * t_star)) - radius_sum


def select_critical(
    obs,
    *,
    ttc_horizon: float = TTC_HORIZON,
    vru_radius: float = VRU_RADIUS,
    half_lane: float = HALF_LANE,
    lane_spacing: float = LANE_SPACING,
    ego_radius: float = EGO_RADIUS,
) -> list[CriticalObject]:
    ego = obs.ego
    origin = ego.position
    heading = ego.heading
    c, s = np.cos(-heading), np.sin(-heading)
    rot = np.array([[c, -s], [s, c]])
    ego_vel = np.array([ego.speed, 0.0])
    forward = np.array([1.0, 0.0])

    flagged: dict[str, list[str]] = {}
    frames: dict[str, tuple[str, np.ndarray, np.ndarray]] = {}
    lead_candidates: dict[float, tuple[float, str]] = {}

    for agent in obs.agents:
        pos_e = ego_frame_transform(np.reshape(agent.position, (1, 2)), origin, heading)[0]
        vel_e = rot @ np.asarray(agent.velocity, dtype=np.float64)
        frames[agent.id] = (agent.kind, pos_e, vel_e)
        reasons = []

        _, clearance = min_clearance(pos_e, vel_e - ego_vel, ego_radius + agent.radius, ttc_horizon)
        if clearance < 0.0:
            reasons.append("ttc_collision")

        if agent.kind == "vehicle" and pos_e[0] > 0.0 and float(vel_e @ forward) >= -0.1:
            for center in (0.0, lane_spacing, -lane_spacing):
                if abs(pos_e[1] - center) <= half_lane:
                    best = lead_candidates.get(center)
                    if best is None or pos_e[0] < best[0]:
                        lead_candidates[center] = (pos_e[0], agent.id)
                    break

        if agent.kind == "pedestrian" and float(np.linalg.norm(pos_e)) <= vru_radius:
            reasons.append("vru")

        if reasons:
            flagged[agent.id] = reasons

    for _, (_, aid) in lead_candidates.items():
        flagged.setdefault(aid, [])
        if "lead_vehicle" not in flagged[aid]:
            flagged[aid].append("lead_vehicle")

    out = []
    for agent in obs.agents:  # preserve observation order
        if agent.id not in flagged:
            continue
        kind, pos_e, vel_e = frames[agent.id]
        reasons = tuple(r for r in REASONS if r in flagged[agent.id])
        out.append(CriticalObject(agent.id, kind, reasons, pos_e, vel_e))

    light_active = obs.light is not None and getattr(obs.light, "value", obs.light) in ("red", "yellow")
    if light_active and obs.light_position is not None:
        light_e = ego_frame_transform(np.reshape(obs.light_position, (1, 2)), origin, heading)[0]
        if light_e[0] > 0.0:
            out.append(
                CriticalObject("light", "light", ("active_signal",), light_e, np.zeros(2))
            )
    return out
