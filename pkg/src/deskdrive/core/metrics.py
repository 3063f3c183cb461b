"""Open-loop planning metrics."""

from __future__ import annotations

import numpy as np

from .types import ContractViolation, Trajectory


def avg_l2(pred: Trajectory, gt: Trajectory) -> float:
    """Mean Euclidean waypoint distance (meters) over the horizon."""
    if pred.horizon != gt.horizon or pred.dt != gt.dt:
        raise ContractViolation(
            f"horizon mismatch: {pred.horizon}@{pred.dt}s vs {gt.horizon}@{gt.dt}s"
        )
    d = np.linalg.norm(pred.waypoints - gt.waypoints, axis=-1)
    return float(d.mean())


def l2_per_horizon(pred: Trajectory, gt: Trajectory) -> np.ndarray:
    """Per-waypoint Euclidean distance, index k at horizon (k+1)*dt."""
    if pred.horizon != gt.horizon:
        raise ContractViolation("horizon mismatch")
    return np.linalg.norm(pred.waypoints - gt.waypoints, axis=-1)
