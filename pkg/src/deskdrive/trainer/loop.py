"""Sequential three-stage training with freeze masks and seeded determinism.

Clips stream in shuffled order; frames within a clip stay ordered so the
FIFO memory sees a causal history (pushes are detached, so per-frame losses
stay independent and gradient accumulation over `batch_size` frames gives
the effective batch). A fresh optimizer per stage inherits only the weights.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Optional

import torch

from deskdrive.core import LossBreakdown
from deskdrive.model import DrivingModel, planning_answer
from deskdrive.planner import fit_anchors, kl_warmup_coefficient
from deskdrive.qtformer import match_and_supervise, perception_target_from_frame
from deskdrive.simworld import Clip, ClipFrame

from .data import TrainingData
from .stages import StageConfig, apply_freeze, total_loss

log = logging.getLogger(__name__)


class TrainAbort(RuntimeError):
    """Non-finite loss; message carries the offending batch id."""


@dataclass
class StageReport:
    stage: str
    steps: int
    losses: list[float] = field(default_factory=list)  # per optimizer step
    components: dict[str, float] = field(default_factory=dict)  # last-step parts


@dataclass
class TrainReport:
    seed: int
    stages: list[StageReport] = field(default_factory=list)


def frame_losses(
    model: DrivingModel,
    stage: StageConfig,
    qtout,
    frame: ClipFrame,
    vqa_pairs,
    generator: torch.Generator,
) -> LossBreakdown:
    """All supervisable terms for one frame under one stage's batch mix."""
    target = perception_target_from_frame(
        frame.obs, frame.agent_futures, model.cfg.qt.motion_horizon
    )
    parts = match_and_supervise(qtout.perception, [target])
    ce_terms = []
    if stage.include_vqa and vqa_pairs:
        questions = model.encode_texts([p.question for p in vqa_pairs])
        answers = model.encode_texts([p.answer for p in vqa_pairs])
        l_ce_vqa, _ = model.reason_vqa(qtout, questions, answers)
        ce_terms.append(l_ce_vqa)
    if stage.include_planning:
        answer = model.encode_texts([planning_answer(frame.speed_decision, frame.command)])
        l_ce_plan, tok = model.reason_plan(qtout, answer)
        if "l_ce" in stage.active_losses:
            ce_terms.append(l_ce_plan)
        futures = [
            [(torch.from_numpy(fut).to(torch.float32), radius) for _, fut, radius in frame.agent_futures]
        ]
        gt = frame.gt_traj.tensor().to(torch.float32)[None]
        plan_parts, _ = model.plan_losses(
            tok, frame.command, gt=gt, agent_futures=futures, generator=generator
        )
        parts = LossBreakdown.merge(parts, plan_parts)
    if ce_terms:
        l_ce = ce_terms[0] if len(ce_terms) == 1 else torch.stack(ce_terms).mean()
        parts = LossBreakdown.merge(parts, LossBreakdown(l_ce=l_ce))
    return parts


def run_stage(
    model: DrivingModel,
    stage: StageConfig,
    data: TrainingData,
    seed: int,
    stage_index: int,
    lr: float = 1e-3,
    loss_weights: Optional[dict[str, float]] = None,
    vae_warmup_frac: float = 0.1,
) -> StageReport:
    apply_freeze(model, stage.frozen)
    model.train()
    trainable = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(trainable, lr=lr)
    n_frames = data.n_frames
    steps_per_epoch = max(1, math.ceil(n_frames / stage.batch_size))
    total_steps = stage.epochs * steps_per_epoch
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=total_steps)
    warmup = int(vae_warmup_frac * total_steps) if stage.stage == "la_align" else 0
    gen = torch.Generator().manual_seed(seed * 7_919 + stage_index)
    order_rng = random.Random(seed * 104_729 + stage_index)
    report = StageReport(stage=stage.stage, steps=0)

    accumulated: Optional[torch.Tensor] = None
    pending = 0
    last_parts: dict[str, float] = {}

    def flush(batch_id: str):
        nonlocal accumulated, pending
        if pending == 0:
            return
        loss = accumulated / pending
        if not torch.isfinite(loss):
            raise TrainAbort(f"non-finite loss at batch {batch_id}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        report.losses.append(float(loss.detach()))
        report.steps += 1
        accumulated, pending = None, 0

    for epoch in range(stage.epochs):
        order = list(range(len(data.clips)))
        order_rng.shuffle(order)
        for clip_pos, clip_idx in enumerate(order):
            clip: Clip = data.clips[clip_idx]
            memory = model.new_memory()
            for f_idx, frame in enumerate(clip.frames):
                qtout = model.perceive([frame.obs], memory, f_idx)
                parts = frame_losses(
                    model, stage, qtout, frame, data.pairs_for(clip, f_idx), gen
                )
                weights = dict(loss_weights or {})
                if warmup > 0:
                    coeff = kl_warmup_coefficient(report.steps, warmup)
                    weights["l_vae"] = weights.get("l_vae", 1.0) * coeff
                frame_total = total_loss(parts, stage, weights)
                accumulated = frame_total if accumulated is None else accumulated + frame_total
                pending += 1
                last_parts = {
                    k: float(v.detach()) for k, v in parts.present().items()
                    if k in stage.active_losses
                }
                if pending >= stage.batch_size:
                    flush(f"{stage.stage}:epoch{epoch}:step{report.steps}:"
                          f"{clip.scenario_id}:frame{f_idx}")
        flush(f"{stage.stage}:epoch{epoch}:tail")
        log.info(
            "stage %s epoch %d/%d: mean step loss %.4f",
            stage.stage, epoch + 1, stage.epochs,
            sum(report.losses[-steps_per_epoch:]) / max(1, len(report.losses[-steps_per_epoch:])),
        )
    report.components = last_parts
    return report


def train(
    model: DrivingModel,
    data: TrainingData,
    stages: list[StageConfig],
    seed: int = 0,
    lr: float = 1e-3,
    loss_weights: Optional[dict[str, float]] = None,
) -> TrainReport:
    """Run the stages sequentially; each inherits the previous weights."""
    torch.manual_seed(seed)
    if model.cfg.planner_kind == "diffusion" and not model.planner.has_anchors:
        gts = [f.gt_traj for c in data.clips for f in c.frames]
        model.set_anchors(fit_anchors(gts, k=model.cfg.diffusion.n_modes, seed=seed))
    report = TrainReport(seed=seed)
    for i, stage in enumerate(stages):
        report.stages.append(
            run_stage(model, stage, data, seed, i, lr=lr, loss_weights=loss_weights)
        )
    model.eval()
    return report
