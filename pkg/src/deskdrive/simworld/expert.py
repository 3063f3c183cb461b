"""Rule-based expert driver used to script demonstrations.

Longitudinal control is an intelligent-driver-model car follower against the
nearest relevant obstacle (lead vehicle, crossing pedestrian, or a virtual
stationary obstacle at a red stop line), with an emergency-braking override.
Lateral control tracks the route's commanded lane center at a bounded rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import NavigationCommand, Trajectory
from .world import ADJACENT_LANE_Y, PLAN_DT, LightState, SceneObservation
from .scenarios import Scenario

IDM_A_MAX = 2.5  # max comfortable acceleration
IDM_B = 3.5  # comfortable braking
IDM_S0 = 4.0  # standstill gap after radii are subtracted
IDM_T = 1.4  # desired time headway
HARD_BRAKE = 8.0
LATERAL_RATE = 1.1  # m/s lane-change speed
STOP_LINE_MARGIN = 2.5  # stop this far before the line
LANE_BAND = 1.4  # lateral distance that counts as "in my lane"
PED_BUFFER = 1.5  # extra standoff for pedestrians
ROLLOUT_DT = 0.1


@dataclass
class _Obstacle:
    gap: float  # along-x gap with radii subtracted
    speed: float  # obstacle speed along x


@dataclass
class _MovingAgent:
    x: float
    y: float
    vx: float
    vy: float
    radius: float
    kind: str

    def at(self, dt: float) -> tuple[float, float]:
        return self.x + self.vx * dt, self.y + self.vy * dt


class ExpertPolicy:
    """Scripted driver; `plan(obs)` returns a 4-waypoint ego-frame trajectory."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.cruise = scenario.ego_speed
        self._lane_y = 0.0

    def _lane_target(self, command: NavigationCommand) -> float:
        if command == NavigationCommand.CHANGE_LANE_LEFT:
            self._lane_y = ADJACENT_LANE_Y
        elif command == NavigationCommand.CHANGE_LANE_RIGHT:
            self._lane_y = 0.0
        return self._lane_y

    def _pick_obstacle(
        self,
        agents: list[_MovingAgent],
        dt: float,
        ego_x: float,
        y_now: float,
        y_tgt: float,
        stop_line: Optional[float],
        light: LightState,
    ) -> Optional[_Obstacle]:
        best: Optional[_Obstacle] = None
        for a in agents:
            ax, ay = a.at(dt)
            if ax <= ego_x - 1.0:
                continue
            if a.kind == "pedestrian":
                crossing_in = a.vy < 0 and -2.5 < ay <= 4.6
                inside = abs(ay) <= 2.2
                if not (crossing_in or inside):
                    continue
                cand = _Obstacle(
                    gap=ax - ego_x - (1.0 + a.radius) - PED_BUFFER, speed=0.0
                )
            else:
                if not (abs(ay - y_now) < LANE_BAND or abs(ay - y_tgt) < LANE_BAND):
                    continue
                cand = _Obstacle(gap=ax - ego_x - (1.0 + a.radius), speed=max(0.0, a.vx))
            if best is None or cand.gap < best.gap:
                best = cand
        if (
            stop_line is not None
            and light in (LightState.RED, LightState.YELLOW)
            and ego_x < stop_line
        ):
            cand = _Obstacle(gap=stop_line - STOP_LINE_MARGIN - ego_x, speed=0.0)
            if best is None or cand.gap < best.gap:
                best = cand
        return best

    def _idm_accel(self, v: float, obstacle: Optional[_Obstacle]) -> float:
        free = IDM_A_MAX * (1.0 - (v / max(self.cruise, 0.1)) ** 4)
        a = free
        if obstacle is not None:
            s = max(obstacle.gap, 0.1)
            dv = v - obstacle.speed
            s_star = IDM_S0 + max(
                0.0, v * IDM_T + v * dv / (2.0 * math.sqrt(IDM_A_MAX * IDM_B))
            )
            a = IDM_A_MAX * (1.0 - (v / max(self.cruise, 0.1)) ** 4 - (s_star / s) ** 2)
            # emergency override: brake hard enough to stop inside the gap
            if dv > 0 and s > 0.1:
                a_req = dv * dv / (2.0 * max(s - 1.0, 0.3))
                if a_req > IDM_B:
                    a = -min(HARD_BRAKE, 1.15 * a_req)
        return max(-HARD_BRAKE, min(IDM_A_MAX, a))

    def plan(self, obs: SceneObservation) -> Trajectory:
        y_now = float(obs.ego.position[1])
        y_tgt = self._lane_target(obs.ego.command)
        agents = [
            _MovingAgent(
                x=float(a.position[0]),
                y=float(a.position[1]),
                vx=float(a.velocity[0]),
                vy=float(a.velocity[1]),
                radius=a.radius,
                kind=a.kind,
            )
            for a in obs.agents
        ]
        stop_line = None if obs.light_position is None else float(obs.light_position[0])
        v = obs.ego.speed
        ego_x0 = float(obs.ego.position[0])
        x_rel, y_abs = 0.0, y_now
        waypoints = []
        n_sub = int(round(PLAN_DT / ROLLOUT_DT))
        # constant-velocity obstacle propagation; replanning corrects drift
        for i in range(1, n_sub * 4 + 1):
            t_ahead = i * ROLLOUT_DT
            obstacle = self._pick_obstacle(
                agents, t_ahead, ego_x0 + x_rel, y_abs, y_tgt, stop_line, obs.light
            )
            a = self._idm_accel(v, obstacle)
            v = max(0.0, v + a * ROLLOUT_DT)
            x_rel += v * ROLLOUT_DT
            if v > 0.5:
                dy = y_tgt - y_abs
                y_abs += math.copysign(min(abs(dy), LATERAL_RATE * ROLLOUT_DT), dy)
            if i % n_sub == 0:
                waypoints.append((x_rel, y_abs - y_now))
        wp = np.array(waypoints, dtype=np.float64)
        # offsets are lane-aligned (world axes); rotate into the ego frame
        h = obs.ego.heading
        rot = np.array(
            [[math.cos(h), math.sin(h)], [-math.sin(h), math.cos(h)]], dtype=np.float64
        )
        wp = wp @ rot.T
        return Trajectory(wp, dt=PLAN_DT)
