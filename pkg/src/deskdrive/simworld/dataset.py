"""Demonstration clip extraction: 2 Hz frames with realized-future labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import (
    ContractViolation,
    NavigationCommand,
    SpeedDecision,
    Trajectory,
    ego_frame_transform,
)
from .runner import EpisodeRecord, run_episode
from .scenarios import Scenario
from .world import PLAN_DT, REPLAN_STEPS, SceneObservation

log = logging.getLogger(__name__)

SPEED_DEADBAND = 0.3  # m/s^2; |realized accel| below this labels "keep"
GT_HORIZON = 4  # waypoints per frame at PLAN_DT spacing


@dataclass
class ClipFrame:
    obs: SceneObservation
    gt_traj: Trajectory  # (GT_HORIZON, 2) realized future, ego frame
    command: NavigationCommand
    speed_decision: SpeedDecision
    agent_futures: list[tuple[str, np.ndarray, float]] = field(default_factory=list)
    # each: (agent id, (GT_HORIZON, 2) ego-frame future, radius)


@dataclass
class Clip:
    scenario_id: str
    family: str
    seed: int
    frames: list[ClipFrame]


def speed_decision_label(dv_dt: float, deadband: float = SPEED_DEADBAND) -> SpeedDecision:
    if dv_dt > deadband:
        return SpeedDecision.ACCELERATE
    if dv_dt < -deadband:
        return SpeedDecision.DECELERATE
    return SpeedDecision.KEEP


def extract_frames(record: EpisodeRecord, horizon: int = GT_HORIZON) -> list[ClipFrame]:
    """Slice a recorded episode into 2 Hz frames with realized-future labels.

    Frame k sits at sim step k*REPLAN_STEPS; its ground-truth trajectory is the
    ego's realized world track at the next `horizon` half-second marks, mapped
    into the frame's ego pose. Frames without a full future are dropped.
    """
    states = record.states
    last = len(states) - 1
    frames: list[ClipFrame] = []
    for step, obs in sorted(record.observations.items()):
        if step + horizon * REPLAN_STEPS > last:
            continue
        s0 = states[step]
        origin = np.array([s0.ego_x, s0.ego_y])
        future_idx = [step + (m + 1) * REPLAN_STEPS for m in range(horizon)]
        ego_future = np.array(
            [[states[i].ego_x, states[i].ego_y] for i in future_idx]
        )
        gt = ego_frame_transform(ego_future, origin, s0.ego_heading)
        dv_dt = (states[step + REPLAN_STEPS].ego_speed - s0.ego_speed) / PLAN_DT
        agent_futures = []
        for slot, (aid, _, _, _, _, kind, radius) in enumerate(s0.agents):
            fut = np.array(
                [
                    [states[i].agents[slot][1], states[i].agents[slot][2]]
                    for i in future_idx
                ]
            )
            agent_futures.append(
                (aid, ego_frame_transform(fut, origin, s0.ego_heading), radius)
            )
        frames.append(
            ClipFrame(
                obs=obs,
                gt_traj=Trajectory(gt, dt=PLAN_DT, origin_time=s0.t),
                command=s0.command,
                speed_decision=speed_decision_label(dv_dt),
                agent_futures=agent_futures,
            )
        )
    return frames


def make_dataset(
    scenarios: list[Scenario], strict: bool = True, min_frames: int = 4
) -> list[Clip]:
    """Run the expert on each scenario and extract training clips.

    Scenarios the expert fails are rejected: raised in strict mode, logged and
    skipped otherwise.
    """
    clips: list[Clip] = []
    for sc in scenarios:
        record = run_episode(sc, policy=None, record=True)
        assert isinstance(record, EpisodeRecord)
        res = record.result
        if not res.success:
            msg = (
                f"expert failed scenario {sc.id}: completion "
                f"{res.route_completion:.2f}, infractions {res.infractions}"
            )
            if strict:
                raise ContractViolation(msg)
            log.warning("%s (skipped)", msg)
            continue
        frames = extract_frames(record)
        if len(frames) < min_frames:
            msg = f"scenario {sc.id} yielded only {len(frames)} frames"
            if strict:
                raise ContractViolation(msg)
            log.warning("%s (skipped)", msg)
            continue
        clips.append(
            Clip(scenario_id=sc.id, family=sc.family, seed=sc.seed, frames=frames)
        )
    return clips
