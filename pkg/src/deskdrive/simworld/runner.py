"""Closed-loop episode execution and per-step state recording."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from ..core import NavigationCommand, Trajectory
from .world import (
    DT_SIM,
    REPLAN_STEPS,
    LightState,
    SceneObservation,
    TERMINAL_INFRACTIONS,
    World,
)
from .scenarios import Scenario


class Policy(Protocol):
    def plan(self, obs: SceneObservation) -> Trajectory: ...


@dataclass
class StateSnap:
    """World state at one sim step (0.1 s grid)."""

    t: float
    ego_x: float
    ego_y: float
    ego_heading: float
    ego_speed: float
    agents: list[tuple[str, float, float, float, float, str, float]]  # id,x,y,vx,vy,kind,r
    light: LightState
    progress: float
    command: NavigationCommand


@dataclass
class EpisodeResult:
    scenario_id: str
    family: str
    seed: int
    success: bool
    route_completion: float
    infractions: list[str]
    duration: float
    reference_speed: float
    speeds: np.ndarray  # per sim step
    accels: np.ndarray  # finite differences of speeds


@dataclass
class EpisodeRecord:
    result: EpisodeResult
    states: list[StateSnap] = field(default_factory=list)
    observations: dict[int, SceneObservation] = field(default_factory=dict)
    plans: dict[int, Trajectory] = field(default_factory=dict)


def _snapshot(world: World) -> StateSnap:
    return StateSnap(
        t=world.t,
        ego_x=world.ego.x,
        ego_y=world.ego.y,
        ego_heading=world.ego.heading,
        ego_speed=world.ego.v,
        agents=[
            (a.id, a.x, a.y, a.vx, a.vy, a.kind, a.radius) for a in world.agents
        ],
        light=world.light,
        progress=world.progress,
        command=world.current_command(),
    )


def run_episode(
    scenario: Scenario,
    policy: Optional[Policy] = None,
    record: bool = False,
    success_allows_red_light: bool = True,
) -> EpisodeResult | EpisodeRecord:
    """Run one scenario to termination; `record=True` returns the full trace."""
    from .expert import ExpertPolicy

    world = World(scenario)
    if policy is None:
        policy = ExpertPolicy(scenario)
    rec = EpisodeRecord(result=None)  # type: ignore[arg-type]
    speeds = [world.ego.v]
    if record:
        rec.states.append(_snapshot(world))
    while not world.terminated:
        if world.step_count % REPLAN_STEPS == 0:
            obs = world.observe()
            plan = policy.plan(obs)
            if record:
                rec.observations[world.step_count] = obs
                rec.plans[world.step_count] = plan
            world.step(plan)
        else:
            world.step()
        speeds.append(world.ego.v)
        if record:
            rec.states.append(_snapshot(world))
    speeds_arr = np.asarray(speeds, dtype=np.float64)
    accels = np.diff(speeds_arr) / DT_SIM
    blocked = set(TERMINAL_INFRACTIONS)
    if not success_allows_red_light:
        blocked.add("red_light")
    success = world.progress >= 1.0 and not (set(world.infractions) & blocked)
    result = EpisodeResult(
        scenario_id=scenario.id,
        family=scenario.family,
        seed=scenario.seed,
        success=success,
        route_completion=world.progress,
        infractions=list(world.infractions),
        duration=world.t,
        reference_speed=scenario.ego_speed,
        speeds=speeds_arr,
        accels=accels,
    )
    if record:
        rec.result = result
        return rec
    return result
