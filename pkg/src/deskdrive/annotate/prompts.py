"""Describer prompt assembly.

The three prompt bodies are fixed instruction text; placeholders are filled by
literal substring replacement (never str.format, the JSON braces in the format
instructions would need escaping).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..core import EgoStatus, NavigationCommand, SpeedDecision, ego_frame_transform
from .critical import CriticalObject

PROMPT_SCENE = (
    "Suppose you are driving, generate a description of the driving scene which "
    "includes the key factors for driving planning, including the traffic "
    "conditions, weather, time of day and road conditions, traffic signs, and "
    "traffic lights that affect the driving of the ego vehicle if it exists, "
    "indicating smooth surfaces or the presence of obstacles; The description "
    "should be concise, and accurate to facilitate informed decision-making. "
    "Please make sure the traffic light colors you provide are accurate; "
    "otherwise, give 'unknown.'"
)

PROMPT_CRITICAL = (
    "I will provide you with several critical objects that are most important to "
    "my short-term command in the last image of the video. I provide you with 2d "
    "coordinates, which are two points of the top-left and bottom-right "
    "coordinates, and the 3d position and velocity information of these critical "
    "objects: {objects_desc}. Please describe their action and explain why they "
    "are most important, including their speed, position, heading, and influence "
    "on ego vehicle. Please associate these objects with the objects in the image "
    "and please remember the ego vehicle is located at the **center of the bottom "
    "edge of the picture**."
)

PROMPT_DECISION = (
    "Besides, I will provide you speed, historical trajectory and future driving "
    "behaviors of ego vehicle, which can be divided into SPEED decisions and "
    "COMMAND decisions, SPEED includes keep, accelerate, decelerate, while "
    "COMMAND includes left, right, straight, lane follow, change lane left, "
    "change lane right. Your current speed is {ego_vel} m/s, historical "
    "trajectory is {ego_his_trajs}. The next SPEED decision is {speed_decision}, "
    "the next COMMAND decision is {path_decision}. Please analyze the reasons "
    "for the future driving behaviors or the reason why ego vehicle can "
    "{path_decision} based on the driving environment, including the behavior of "
    "other traffic participants, especially the critical objects, road "
    "conditions, and traffic light status."
)

FORMAT_EXAMPLE = (
    "You should refer to the following example and format the results like "
    '{"description": "xxx", "critical_objects": "xxx", "action": '
    '"{speed_decision} and {path_decision}"}.'
)

FORMAT_NO_CRITICALS = (
    "If it has no critical_objects, you should refer to the following example "
    'and format the results like {"description": "xxx", "critical_objects": [], '
    '"action": "xxx"}.'
)


def describe_objects(criticals: Sequence[CriticalObject]) -> str:
    parts = []
    for obj in criticals:
        x, y = obj.position_3d
        vx, vy = obj.velocity
        parts.append(
            f"{obj.kind} at <{x:.2f}, {y:.2f}> moving at <{vx:.2f}, {vy:.2f}> m/s"
            f" ({', '.join(obj.reasons)})"
        )
    return "[" + "; ".join(parts) + "]"


def serialize_history(ego: EgoStatus) -> str:
    hist = ego_frame_transform(ego.history_positions, ego.position, ego.heading)
    return "[" + ", ".join(f"<{x:.2f}, {y:.2f}>" for x, y in hist) + "]"


def build_prompts(
    obs,
    criticals: Sequence[CriticalObject],
    ego: EgoStatus,
    expert_action: tuple[SpeedDecision, NavigationCommand],
) -> tuple[str, Optional[str], str]:
    """Fill the three prompt templates; prompt 2 is omitted without criticals."""
    speed_decision, command = expert_action
    speed_word = speed_decision.text
    path_word = command.text

    prompt1 = PROMPT_SCENE
    if criticals:
        prompt2 = PROMPT_CRITICAL.replace("{objects_desc}", describe_objects(criticals))
        fmt = (
            FORMAT_EXAMPLE.replace("{speed_decision}", speed_word)
            .replace("{path_decision}", path_word)
        )
    else:
        prompt2 = None
        fmt = FORMAT_NO_CRITICALS
    prompt3 = (
        PROMPT_DECISION.replace("{ego_vel}", f"{ego.speed:.1f}")
        .replace("{ego_his_trajs}", serialize_history(ego))
        .replace("{speed_decision}", speed_word)
        .replace("{path_decision}", path_word)
    ) + " " + fmt
    return prompt1, prompt2, prompt3
