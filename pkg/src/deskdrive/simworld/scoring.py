"""Episode scoring: driving score, success, efficiency, comfort."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .runner import EpisodeResult
from .world import DT_SIM

INFRACTION_PENALTY = {
    "collision_pedestrian": 0.50,
    "collision_vehicle": 0.60,
    "collision_static": 0.65,
    "red_light": 0.70,
}
ACCEL_COMFORT_LIMIT = 3.0  # m/s^2
JERK_COMFORT_LIMIT = 5.0  # m/s^3


@dataclass
class EpisodeScore:
    driving_score: float  # 0..100
    success: bool
    route_completion: float
    efficiency: float  # 0..100
    comfortness: float  # 0..100
    infractions: list[str]


def score_episode(result: EpisodeResult) -> EpisodeScore:
    penalty = 1.0
    for kind in result.infractions:
        penalty *= INFRACTION_PENALTY.get(kind, 1.0)
    ds = 100.0 * result.route_completion * penalty

    speeds = np.asarray(result.speeds, dtype=np.float64)
    mean_speed = float(speeds.mean()) if speeds.size else 0.0
    efficiency = 100.0 * min(1.0, mean_speed / max(result.reference_speed, 1e-6))

    accels = np.asarray(result.accels, dtype=np.float64)
    if accels.size >= 2:
        jerks = np.diff(accels) / DT_SIM
        ok = (np.abs(accels[1:]) <= ACCEL_COMFORT_LIMIT) & (
            np.abs(jerks) <= JERK_COMFORT_LIMIT
        )
        comfortness = 100.0 * float(ok.mean())
    elif accels.size == 1:
        comfortness = 100.0 if abs(accels[0]) <= ACCEL_COMFORT_LIMIT else 0.0
    else:
        comfortness = 100.0
    return EpisodeScore(
        driving_score=ds,
        success=result.success,
        route_completion=result.route_completion,
        efficiency=efficiency,
        comfortness=comfortness,
        infractions=list(result.infractions),
    )


def aggregate_scores(scores: list[EpisodeScore]) -> dict:
    """Mean metrics over a suite plus per-infraction counts."""
    if not scores:
        return {
            "driving_score": 0.0,
            "success_rate": 0.0,
            "route_completion": 0.0,
            "efficiency": 0.0,
            "comfortness": 0.0,
            "episodes": 0,
            "infraction_counts": {},
        }
    counts: dict[str, int] = {}
    for s in scores:
        for kind in s.infractions:
            counts[kind] = counts.get(kind, 0) + 1
    return {
        "driving_score": float(np.mean([s.driving_score for s in scores])),
        "success_rate": float(np.mean([1.0 if s.success else 0.0 for s in scores])),
        "route_completion": float(np.mean([s.route_completion for s in scores])),
        "efficiency": float(np.mean([s.efficiency for s in scores])),
        "comfortness": float(np.mean([s.comfortness for s in scores])),
        "episodes": len(scores),
        "infraction_counts": counts,
    }
