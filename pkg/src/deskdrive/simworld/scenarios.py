"""Scripted scenario families with seed-randomized parameters.

Each family mirrors one closed-loop ability: emergency braking behind a
braking lead, signalized stops, overtaking a blocked lane, pedestrian
crossings, yielding to a cut-in, and lane merges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import NavigationCommand
from .world import ADJACENT_LANE_Y, ScriptEvent

FAMILIES = ("lead_brake", "red_light", "overtake", "pedestrian_cross", "give_way", "merge")
HELD_OUT_FAMILIES = ("lead_brake", "red_light", "pedestrian_cross")


@dataclass
class Scenario:
    id: str
    family: str
    route_length: float
    seed: int
    script: list[ScriptEvent]
    agents: list[dict]
    ego_speed: float  # initial + cruise speed, m/s
    initial_light: str = "none"
    stop_line: Optional[float] = None
    timeout: float = 40.0
    route_commands: list[tuple[float, float, NavigationCommand]] = field(default_factory=list)

    def __post_init__(self):
        if self.route_length <= 0:
            raise ValueError("route_length must be positive")
        self.script = sorted(self.script, key=lambda e: e.time)


def _snap(x: float, grid: float = 0.1) -> float:
    return round(round(x / grid) * grid, 6)


def make_scenario(family: str, seed: int) -> Scenario:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    rng = np.random.default_rng(seed)
    v0 = _snap(6.0 + 2.0 * rng.random(), 0.5)
    builder = _BUILDERS[family]
    return builder(seed, rng, v0)


def _lead_brake(seed, rng, v0) -> Scenario:
    gap0 = _snap(16.0 + 8.0 * rng.random())
    t_brake = _snap(2.0 + 2.0 * rng.random())
    decel = float(rng.choice([4.0, 5.0, 6.0]))
    dwell = _snap(2.0 + 1.5 * rng.random())
    t_stop = t_brake + v0 / decel
    t_resume = _snap(t_stop + dwell)
    script = [
        ScriptEvent(t_brake, "lead", "ax", -decel),
        ScriptEvent(t_resume, "lead", "ax", 2.0),
        ScriptEvent(_snap(t_resume + v0 / 2.0), "lead", "ax", 0.0),
    ]
    agents = [{"id": "lead", "kind": "vehicle", "x": gap0, "y": 0.0, "vx": v0}]
    return Scenario(
        id=f"lead_brake-{seed}", family="lead_brake", route_length=80.0, seed=seed,
        script=script, agents=agents, ego_speed=v0, timeout=35.0,
        route_commands=[(0.0, 1e9, NavigationCommand.LANE_FOLLOW)],
    )


def _red_light(seed, rng, v0) -> Scenario:
    stop_line = _snap(35.0 + 15.0 * rng.random())
    t_green = _snap(4.0 + 4.0 * rng.random())
    script = [ScriptEvent(t_green, "light", "state", "green")]
    return Scenario(
        id=f"red_light-{seed}", family="red_light", route_length=max(80.0, stop_line + 30.0),
        seed=seed, script=script, agents=[], ego_speed=v0, initial_light="red",
        stop_line=stop_line, timeout=40.0,
        route_commands=[(0.0, 1e9, NavigationCommand.LANE_FOLLOW)],
    )


def _overtake(seed, rng, v0) -> Scenario:
    x_obs = _snap(30.0 + 15.0 * rng.random())
    agents = [{"id": "blocker", "kind": "vehicle", "x": x_obs, "y": 0.0, "vx": 0.0}]
    cmds = [
        (0.0, x_obs - 18.0, NavigationCommand.LANE_FOLLOW),
        (x_obs - 18.0, x_obs + 10.0, NavigationCommand.CHANGE_LANE_LEFT),
        (x_obs + 10.0, x_obs + 28.0, NavigationCommand.CHANGE_LANE_RIGHT),
        (x_obs + 28.0, 1e9, NavigationCommand.LANE_FOLLOW),
    ]
    return Scenario(
        id=f"overtake-{seed}", family="overtake", route_length=max(90.0, x_obs + 45.0),
        seed=seed, script=[], agents=agents, ego_speed=v0, timeout=45.0, route_commands=cmds,
    )


def _pedestrian_cross(seed, rng, v0) -> Scenario:
    x_ped = _snap(25.0 + 15.0 * rng.random())
    # start crossing so the walker occupies the ego lane as the ego nears
    t_cross = _snap(max(0.5, x_ped / v0 - 2.8 + 1.2 * rng.random()))
    agents = [{"id": "walker", "kind": "pedestrian", "x": x_ped, "y": 4.5, "vx": 0.0}]
    script = [
        ScriptEvent(t_cross, "walker", "vy", -1.5),
        ScriptEvent(_snap(t_cross + 6.0), "walker", "vy", 0.0),  # 9 m crossing at 1.5 m/s
    ]
    return Scenario(
        id=f"pedestrian_cross-{seed}", family="pedestrian_cross", route_length=max(80.0, x_ped + 35.0),
        seed=seed, script=script, agents=agents, ego_speed=v0, timeout=45.0,
        route_commands=[(0.0, 1e9, NavigationCommand.LANE_FOLLOW)],
    )


def _give_way(seed, rng, v0) -> Scenario:
    gap0 = _snap(8.0 + 5.0 * rng.random())
    t_cut = _snap(2.0 + 2.0 * rng.random())
    agents = [{"id": "merger", "kind": "vehicle", "x": gap0, "y": ADJACENT_LANE_Y, "vx": v0 + 1.0}]
    script = [
        ScriptEvent(t_cut, "merger", "vy", -1.1),
        ScriptEvent(t_cut, "merger", "ax", -0.75),
        ScriptEvent(_snap(t_cut + 2.0), "merger", "vy", 0.0),
        ScriptEvent(_snap(t_cut + 2.0), "merger", "ax", 0.0),
    ]
    return Scenario(
        id=f"give_way-{seed}", family="give_way", route_length=80.0, seed=seed,
        script=script, agents=agents, ego_speed=v0, timeout=35.0,
        route_commands=[(0.0, 1e9, NavigationCommand.LANE_FOLLOW)],
    )


def _merge(seed, rng, v0) -> Scenario:
    s1 = _snap(20.0 + 10.0 * rng.random())
    gap = _snap(18.0 + 8.0 * rng.random())
    agents = [{"id": "traffic", "kind": "vehicle", "x": gap, "y": ADJACENT_LANE_Y, "vx": v0 - 1.0}]
    cmds = [
        (0.0, s1, NavigationCommand.LANE_FOLLOW),
        (s1, s1 + 22.0, NavigationCommand.CHANGE_LANE_LEFT),
        (s1 + 22.0, 1e9, NavigationCommand.LANE_FOLLOW),
    ]
    return Scenario(
        id=f"merge-{seed}", family="merge", route_length=85.0, seed=seed,
        script=[], agents=agents, ego_speed=v0, timeout=40.0, route_commands=cmds,
    )


_BUILDERS = {
    "lead_brake": _lead_brake,
    "red_light": _red_light,
    "overtake": _overtake,
    "pedestrian_cross": _pedestrian_cross,
    "give_way": _give_way,
    "merge": _merge,
}


def scenario_suite(families: list[str], seeds: list[int]) -> list[Scenario]:
    return [make_scenario(f, s) for f in families for s in seeds]


def target_lane_y(command: NavigationCommand, current_target: float) -> float:
    """Lane center the route currently asks for."""
    if command == NavigationCommand.CHANGE_LANE_LEFT:
        return ADJACENT_LANE_Y
    if command == NavigationCommand.CHANGE_LANE_RIGHT:
        return 0.0
    return current_target
