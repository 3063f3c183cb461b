"""Deterministic 2-D kinematic driving world.

The road is a straight corridor along +x with an ego lane centered at y=0,
an adjacent lane center, and an optional signalized stop line. Agents follow
scripted piecewise-constant kinematics; the ego follows handed-over waypoint
plans through a pure-pursuit tracker with proportional speed control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ..core import ContractViolation, EgoStatus, NavigationCommand, Trajectory

DT_SIM = 0.1  # simulation step, seconds
PLAN_DT = 0.5  # waypoint spacing / replan period, seconds
REPLAN_STEPS = int(round(PLAN_DT / DT_SIM))  # sim steps between replans
CORRIDOR_HALF_WIDTH = 3.5  # meters, off-road beyond this
ADJACENT_LANE_Y = 2.2  # adjacent lane center offset
VEHICLE_RADIUS = 1.0
PEDESTRIAN_RADIUS = 0.4
V_MAX = 15.0
EGO_HISTORY_STEPS = 4  # past 0.5 s samples carried in EgoStatus


class LightState(Enum):
    NONE = "none"
    RED = "red"
    GREEN = "green"
    YELLOW = "yellow"


LIGHT_ORDER = (LightState.NONE, LightState.RED, LightState.GREEN, LightState.YELLOW)
LIGHT_INDEX = {s: i for i, s in enumerate(LIGHT_ORDER)}


@dataclass
class AgentObs:
    id: str
    position: np.ndarray  # world (x, y)
    velocity: np.ndarray  # world (vx, vy)
    heading: float
    radius: float
    kind: str  # "vehicle" | "pedestrian"


@dataclass
class SceneObservation:
    timestamp: float
    ego: EgoStatus
    agents: list[AgentObs]
    light: LightState
    light_position: Optional[np.ndarray]  # stop line (x, 0) or None
    route_progress: float
    noise_seed: int = 0  # per-frame seed for model-side sensor noise


@dataclass
class ScriptEvent:
    """At `time`, set `attr` of agent `target` (or the traffic light)."""

    time: float
    target: str  # agent id or "light"
    attr: str  # "ax" | "vy" | "vx" | "state"
    value: object


@dataclass
class _Agent:
    id: str
    kind: str
    x: float
    y: float
    vx: float
    vy: float = 0.0
    ax: float = 0.0
    radius: float = VEHICLE_RADIUS

    def advance(self, dt: float):
        self.x += self.vx * dt
        self.y += self.vy * dt
        self.vx = max(0.0, self.vx + self.ax * dt)


@dataclass
class _EgoState:
    x: float
    y: float
    heading: float
    v: float


INFRACTION_KINDS = (
    "collision_vehicle",
    "collision_pedestrian",
    "collision_static",
    "red_light",
    "route_timeout",
    "off_road",
)
TERMINAL_INFRACTIONS = {
    "collision_vehicle",
    "collision_pedestrian",
    "collision_static",
    "route_timeout",
    "off_road",
}


class World:
    """One episode = one World instance; step() until `terminated`."""

    def __init__(self, scenario, dt: float = DT_SIM):
        self.scenario = scenario
        self.dt = dt
        self.t = 0.0
        self.step_count = 0
        self.ego = _EgoState(x=0.0, y=0.0, heading=0.0, v=scenario.ego_speed)
        self.agents = [
            _Agent(id=a["id"], kind=a["kind"], x=a["x"], y=a["y"], vx=a["vx"],
                   vy=a.get("vy", 0.0),
                   radius=PEDESTRIAN_RADIUS if a["kind"] == "pedestrian" else VEHICLE_RADIUS)
            for a in scenario.agents
        ]
        self.light = LightState(scenario.initial_light)
        self.events = sorted(scenario.script, key=lambda e: e.time)
        self._next_event = 0
        self.infractions: list[str] = []
        self.terminated = False
        self.progress = 0.0
        self._collided_ids: set[str] = set()
        self._red_light_done = False
        self._ego_track: list[tuple[float, float, float, float]] = []  # x, y, heading, v
        self._plan_world: Optional[np.ndarray] = None  # (T, 2) world waypoints
        self._plan_speeds: Optional[np.ndarray] = None
        self._plan_time = 0.0

    # ------------------------------------------------------------------ plan

    def set_plan(self, plan: Trajectory):
        """Hand over an ego-frame waypoint plan at the current time."""
        wp_ego = plan.waypoints
        c, s = math.cos(self.ego.heading), math.sin(self.ego.heading)
        rot = np.array([[c, -s], [s, c]])
        wp_world = wp_ego @ rot.T + np.array([self.ego.x, self.ego.y])
        prev = np.vstack([[self.ego.x, self.ego.y], wp_world[:-1]])
        seg = np.linalg.norm(wp_world - prev, axis=1)
        self._plan_world = wp_world
        self._plan_speeds = seg / plan.dt
        self._plan_time = self.t

    # ------------------------------------------------------------------ step

    def step(self, plan: Optional[Trajectory] = None) -> SceneObservation:
        if self.terminated:
            raise ContractViolation("cannot step a terminated episode")
        if plan is not None:
            self.set_plan(plan)

        self._apply_events()
        for a in self.agents:
            a.advance(self.dt)
        prev_x = self.ego.x
        self._advance_ego()
        self.t += self.dt
        self.step_count += 1
        self._ego_track.append((self.ego.x, self.ego.y, self.ego.heading, self.ego.v))

        self._detect_infractions(prev_x)
        self.progress = max(self.progress, min(1.0, self.ego.x / self.scenario.route_length))
        if self.progress >= 1.0:
            self.terminated = True
        if self.t >= self.scenario.timeout and not self.terminated:
            self.infractions.append("route_timeout")
            self.terminated = True
        return self.observe()

    def _apply_events(self):
        while self._next_event < len(self.events) and self.events[self._next_event].time <= self.t + 1e-9:
            ev = self.events[self._next_event]
            self._next_event += 1
            if ev.target == "light":
                self.light = LightState(ev.value)
            else:
                for a in self.agents:
                    if a.id == ev.target:
                        setattr(a, ev.attr, float(ev.value))

    def _advance_ego(self):
        if self._plan_world is None:
            return  # no plan yet: hold still
        tau = self.t - self._plan_time
        k = min(int(tau / PLAN_DT), len(self._plan_speeds) - 1)
        target_v = float(self._plan_speeds[k])
        # anticipate the next segment so braking plans are tracked without lag
        if k + 1 < len(self._plan_speeds):
            target_v = min(target_v, float(self._plan_speeds[k + 1]))
        a = 4.0 * (target_v - self.ego.v)
        a = max(-8.0, min(3.0, a))
        self.ego.v = max(0.0, min(V_MAX, self.ego.v + a * self.dt))

        pos = np.array([self.ego.x, self.ego.y])
        lookahead = 2.0
        target = self._plan_world[-1]
        for wp in self._plan_world:
            if np.linalg.norm(wp - pos) >= lookahead:
                target = wp
                break
        delta = target - pos
        dist = float(np.linalg.norm(delta))
        if dist > 0.3 and self.ego.v > 0.05:
            alpha = math.atan2(delta[1], delta[0]) - self.ego.heading
            alpha = math.atan2(math.sin(alpha), math.cos(alpha))
            kappa = 2.0 * math.sin(alpha) / max(dist, 0.5)
            self.ego.heading += self.ego.v * kappa * self.dt
        self.ego.x += self.ego.v * math.cos(self.ego.heading) * self.dt
        self.ego.y += self.ego.v * math.sin(self.ego.heading) * self.dt

    def _detect_infractions(self, prev_x: float):
        for a in self.agents:
            if a.id in self._collided_ids:
                continue
            d = math.hypot(self.ego.x - a.x, self.ego.y - a.y)
            if d < VEHICLE_RADIUS + a.radius:
                self._collided_ids.add(a.id)
                if a.kind == "pedestrian":
                    self.infractions.append("collision_pedestrian")
                elif a.kind == "static":
                    self.infractions.append("collision_static")
                else:
                    self.infractions.append("collision_vehicle")
                self.terminated = True
        stop_line = self.scenario.stop_line
        if (
            stop_line is not None
            and not self._red_light_done
            and prev_x < stop_line <= self.ego.x
            and self.light is LightState.RED
        ):
            self.infractions.append("red_light")
            self._red_light_done = True
        if abs(self.ego.y) > CORRIDOR_HALF_WIDTH:
            self.infractions.append("off_road")
            self.terminated = True

    # ----------------------------------------------------------- observation

    def current_command(self) -> NavigationCommand:
        for s_from, s_to, cmd in self.scenario.route_commands:
            if s_from <= self.ego.x < s_to:
                return cmd
        return NavigationCommand.LANE_FOLLOW

    def ego_status(self) -> EgoStatus:
        hist = []
        per_plan = int(round(PLAN_DT / self.dt))
        for k in range(EGO_HISTORY_STEPS, 0, -1):
            idx = len(self._ego_track) - 1 - k * per_plan
            if idx < 0:
                hist.append((0.0, 0.0))
            else:
                hist.append(self._ego_track[idx][:2])
        return EgoStatus(
            speed=self.ego.v,
            heading=self.ego.heading,
            position=np.array([self.ego.x, self.ego.y]),
            history_positions=np.array(hist, dtype=np.float64),
            command=self.current_command(),
        )

    def observe(self) -> SceneObservation:
        agents = [
            AgentObs(
                id=a.id,
                position=np.array([a.x, a.y]),
                velocity=np.array([a.vx, a.vy]),
                heading=0.0 if a.vx >= 0 else math.pi,
                radius=a.radius,
                kind=a.kind,
            )
            for a in self.agents
        ]
        stop_line = self.scenario.stop_line
        return SceneObservation(
            timestamp=self.t,
            ego=self.ego_status(),
            agents=agents,
            light=self.light,
            light_position=None if stop_line is None else np.array([stop_line, 0.0]),
            route_progress=self.progress,
            noise_seed=(int(self.scenario.seed) * 1_000_003 + self.step_count) % (2**31 - 1),
        )
