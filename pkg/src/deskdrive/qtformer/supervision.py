"""Set-prediction supervision for the perception heads.

GT objects are assigned to perception queries one-to-one by minimum-cost
bipartite matching (class NLL + L1 box distance), then five loss terms are
computed: query classification, box regression, traffic state, motion mode
classification, and winning-mode trajectory regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from ..core import ContractViolation, LossBreakdown, ego_frame_transform, focal_ce
from ..simworld import LIGHT_INDEX, SceneObservation
from .heads import NONE_CLASS, PerceptionOutput

VEHICLE_BOX = (2.0, 2.0)  # (w, l) for circle r=1 footprints
PEDESTRIAN_BOX = (0.8, 0.8)
LIGHT_BOX = (0.4, 7.0)  # stop line rendered as a thin wide box
CLASS_INDEX = {"vehicle": 0, "static": 0, "pedestrian": 1, "light": 2}


@dataclass
class PerceptionTarget:
    """Per-frame ground truth in the ego frame."""

    boxes: torch.Tensor  # [G, 5] (x, y, w, l, heading)
    classes: torch.Tensor  # [G] long
    light_index: int  # index into {none, red, green, yellow}
    futures: torch.Tensor  # [G, H, 2]; zero rows where future_mask is false
    future_mask: torch.Tensor  # [G] bool, true for dynamic agents with GT futures


def perception_target_from_frame(
    obs: SceneObservation,
    agent_futures: list[tuple[str, np.ndarray, float]],
    horizon: int = 4,
) -> PerceptionTarget:
    ego = obs.ego
    future_by_id = {aid: fut for aid, fut, _ in agent_futures}
    boxes, classes, futures, mask = [], [], [], []
    for a in obs.agents:
        rel = ego_frame_transform(a.position[None, :], ego.position, ego.heading)[0]
        w, l = PEDESTRIAN_BOX if a.kind == "pedestrian" else VEHICLE_BOX
        heading = a.heading - ego.heading
        boxes.append([rel[0], rel[1], w, l, heading])
        classes.append(CLASS_INDEX.get(a.kind, 0))
        fut = future_by_id.get(a.id)
        if fut is not None and a.kind in ("vehicle", "pedestrian"):
            futures.append(np.asarray(fut, dtype=np.float64)[:horizon])
            mask.append(True)
        else:
            futures.append(np.zeros((horizon, 2)))
            mask.append(False)
    if obs.light_position is not None and obs.light.value != "none":
        rel = ego_frame_transform(
            obs.light_position[None, :], ego.position, ego.heading
        )[0]
        boxes.append([rel[0], rel[1], LIGHT_BOX[0], LIGHT_BOX[1], 0.0])
        classes.append(CLASS_INDEX["light"])
        futures.append(np.zeros((horizon, 2)))
        mask.append(False)
    g = len(boxes)
    return PerceptionTarget(
        boxes=torch.as_tensor(np.array(boxes).reshape(g, 5), dtype=torch.float64),
        classes=torch.as_tensor(classes, dtype=torch.long),
        light_index=LIGHT_INDEX[obs.light],
        futures=torch.as_tensor(
            np.array(futures).reshape(g, horizon, 2), dtype=torch.float64
        ),
        future_mask=torch.as_tensor(mask, dtype=torch.bool),
    )


def match_queries(
    class_logits: torch.Tensor, boxes: torch.Tensor, target: PerceptionTarget
) -> tuple[np.ndarray, np.ndarray]:
    """Assign GT rows to query rows; returns (query_idx, gt_idx) arrays."""
    n_q = class_logits.shape[0]
    g = target.boxes.shape[0]
    if g > n_q:
        raise ContractViolation(f"{g} GT objects exceed {n_q} perception queries")
    if g == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    with torch.no_grad():
        log_p = torch.log_softmax(class_logits, dim=-1)  # [N_q, 4]
        nll = -log_p[:, target.classes]  # [N_q, G]
        l1 = (boxes.unsqueeze(1) - target.boxes.unsqueeze(0)).abs().sum(-1)
        cost = (nll + l1).cpu().numpy()
    q_idx, g_idx = linear_sum_assignment(cost)
    return q_idx, g_idx


def match_and_supervise(
    perception: PerceptionOutput, targets: list[PerceptionTarget]
) -> LossBreakdown:
    """Batched perception losses; every term averages over the batch."""
    b = perception.class_logits.shape[0]
    if len(targets) != b:
        raise ContractViolation(f"{len(targets)} targets for batch of {b}")
    dev = perception.class_logits.device
    dt = perception.class_logits.dtype
    l_cls = torch.zeros((), device=dev, dtype=dt)
    l_reg = torch.zeros((), device=dev, dtype=dt)
    l_tra = torch.zeros((), device=dev, dtype=dt)
    l_mcls = torch.zeros((), device=dev, dtype=dt)
    l_mreg = torch.zeros((), device=dev, dtype=dt)
    n_matched = 0
    n_motion = 0
    for i, tgt in enumerate(targets):
        logits = perception.class_logits[i]
        boxes = perception.boxes[i]
        q_idx, g_idx = match_queries(logits, boxes, tgt)
        labels = torch.full(
            (logits.shape[0],), NONE_CLASS, dtype=torch.long, device=dev
        )
        if len(q_idx):
            labels[q_idx] = tgt.classes[g_idx].to(dev)
        l_cls = l_cls + focal_ce(logits, labels)
        l_tra = l_tra + focal_ce(
            perception.traffic_state_logits[i : i + 1],
            torch.tensor([tgt.light_index], device=dev),
        )
        if len(q_idx):
            gt_boxes = tgt.boxes.to(device=dev, dtype=dt)
            l_reg = l_reg + (boxes[q_idx] - gt_boxes[g_idx]).abs().mean() * len(q_idx)
            n_matched += len(q_idx)
        motion_rows = [
            (q, g) for q, g in zip(q_idx, g_idx) if bool(tgt.future_mask[g])
        ]
        for q, g in motion_rows:
            modes = perception.motion_traj[i, q]  # [K, H, 2]
            gt_fut = tgt.futures[g].to(device=dev, dtype=dt)
            with torch.no_grad():
                err = (modes - gt_fut.unsqueeze(0)).norm(dim=-1).mean(-1)  # [K]
                winner = int(err.argmin())
            l_mcls = l_mcls + focal_ce(
                perception.motion_logits[i, q : q + 1],
                torch.tensor([winner], device=dev),
            )
            l_mreg = l_mreg + (modes[winner] - gt_fut).abs().mean()
            n_motion += 1
    l_cls = l_cls / b
    l_tra = l_tra / b
    l_reg = l_reg / max(n_matched, 1)
    l_mcls = l_mcls / max(n_motion, 1)
    l_mreg = l_mreg / max(n_motion, 1)
    return LossBreakdown(
        l_cls=l_cls, l_reg=l_reg, l_tra=l_tra, l_mcls=l_mcls, l_mreg=l_mreg
    )
