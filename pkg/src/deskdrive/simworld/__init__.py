"""Deterministic 2-D driving world, scripted scenarios, expert, and scoring."""

from .world import (
    ADJACENT_LANE_Y,
    CORRIDOR_HALF_WIDTH,
    DT_SIM,
    EGO_HISTORY_STEPS,
    INFRACTION_KINDS,
    PEDESTRIAN_RADIUS,
    PLAN_DT,
    REPLAN_STEPS,
    TERMINAL_INFRACTIONS,
    VEHICLE_RADIUS,
    V_MAX,
    AgentObs,
    LightState,
    LIGHT_INDEX,
    LIGHT_ORDER,
    SceneObservation,
    ScriptEvent,
    World,
)
from .scenarios import (
    FAMILIES,
    HELD_OUT_FAMILIES,
    Scenario,
    make_scenario,
    scenario_suite,
)
from .expert import ExpertPolicy
from .runner import EpisodeRecord, EpisodeResult, Policy, StateSnap, run_episode
from .scoring import (
    INFRACTION_PENALTY,
    EpisodeScore,
    aggregate_scores,
    score_episode,
)
from .dataset import (
    GT_HORIZON,
    SPEED_DEADBAND,
    Clip,
    ClipFrame,
    extract_frames,
    make_dataset,
    speed_decision_label,
)
from .replay import SCHEMA, replay_lines, write_replay

__all__ = [
    "ADJACENT_LANE_Y",
    "CORRIDOR_HALF_WIDTH",
    "DT_SIM",
    "EGO_HISTORY_STEPS",
    "INFRACTION_KINDS",
    "PEDESTRIAN_RADIUS",
    "PLAN_DT",
    "REPLAN_STEPS",
    "TERMINAL_INFRACTIONS",
    "VEHICLE_RADIUS",
    "V_MAX",
    "AgentObs",
    "LightState",
    "LIGHT_INDEX",
    "LIGHT_ORDER",
    "SceneObservation",
    "ScriptEvent",
    "World",
    "FAMILIES",
    "HELD_OUT_FAMILIES",
    "Scenario",
    "make_scenario",
    "scenario_suite",
    "ExpertPolicy",
    "EpisodeRecord",
    "EpisodeResult",
    "Policy",
    "StateSnap",
    "run_episode",
    "INFRACTION_PENALTY",
    "EpisodeScore",
    "aggregate_scores",
    "score_episode",
    "GT_HORIZON",
    "SPEED_DEADBAND",
    "Clip",
    "ClipFrame",
    "extract_frames",
    "make_dataset",
    "speed_decision_label",
    "SCHEMA",
    "replay_lines",
    "write_replay",
]
