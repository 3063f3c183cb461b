"""Full driving stack: raster encoder -> temporal perception -> reasoner ->
generative planner, plus the closed-loop policy adapter.

The reasoner's planning token is the only bridge between language and action:
VQA batches supervise only text, planning batches teacher-force the action
answer and pass the PLAN hidden state to the planner. At inference the answer
is generated, then the planning token conditions a deterministic plan.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from deskdrive.core import (
    ContractViolation,
    LossBreakdown,
    NavigationCommand,
    SpeedDecision,
    Trajectory,
)
from deskdrive.planner import (
    AnchorSet,
    DiffusionConfig,
    DiffusionPlanner,
    PlannerConfig,
    PlanOutput,
    TrajectoryVAE,
)
from deskdrive.qtformer import GridEncoder, MemoryBank, QTFormer, QTFormerConfig, QTOutput
from deskdrive.reasoner import (
    PLANNING_QUESTION,
    GenerateResult,
    PlanningToken,
    Reasoner,
    ReasonerConfig,
    ReasonerInput,
    Vocabulary,
    answer_targets,
    build_vocabulary,
    ce_loss,
)
from deskdrive.simworld import PLAN_DT, SceneObservation

PLANNER_KINDS = ("vae", "diffusion")


@dataclass
class DrivingModelConfig:
    planner_kind: str = "vae"
    vel_noise_std: float = 0.0
    qt: QTFormerConfig = field(default_factory=QTFormerConfig)
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    vae: PlannerConfig = field(default_factory=PlannerConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)

    def __post_init__(self):
        if self.planner_kind not in PLANNER_KINDS:
            raise ContractViolation(f"planner_kind must be one of {PLANNER_KINDS}")
        if self.vel_noise_std < 0:
            raise ContractViolation("vel_noise_std must be >= 0")
        token_dim = self.vae.token_dim if self.planner_kind == "vae" else self.diffusion.token_dim
        if not (self.qt.c_out == self.reasoner.d_model == token_dim):
            raise ContractViolation(
                f"reasoning width mismatch: qtformer {self.qt.c_out}, "
                f"reasoner {self.reasoner.d_model}, planner {token_dim}"
            )


def planning_answer(speed: SpeedDecision, command: NavigationCommand) -> str:
    """The teacher-forced action answer, in the annotation pipeline's format."""
    return f"{speed.text} and {command.text}"


class DrivingModel(nn.Module):
    def __init__(self, cfg: Optional[DrivingModelConfig] = None, vocab: Optional[Vocabulary] = None):
        super().__init__()
        self.cfg = cfg or DrivingModelConfig()
        self.vocab = vocab or build_vocabulary()
        self.encoder = GridEncoder(c_f=self.cfg.qt.c_q, vel_noise_std=self.cfg.vel_noise_std)
        self.qt = QTFormer(self.cfg.qt)
        self.reasoner = Reasoner(self.vocab, self.cfg.reasoner)
        if self.cfg.planner_kind == "vae":
            self.planner: nn.Module = TrajectoryVAE(self.cfg.vae)
        else:
            self.planner = DiffusionPlanner(self.cfg.diffusion)
        self._plan_question = self.encode_texts([PLANNING_QUESTION])

    # -- text plumbing -----------------------------------------------------

    def encode_texts(self, texts: Sequence[str]) -> torch.Tensor:
        """Encode and PAD-pad a batch of strings to a (B, L) id tensor."""
        ids = [self.vocab.encode(t) for t in texts]
        width = max((len(i) for i in ids), default=1)
        out = torch.full((len(ids), max(width, 1)), self.vocab.pad_id, dtype=torch.long)
        for row, seq in enumerate(ids):
            out[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        return out

    def planning_questions(self, batch: int) -> torch.Tensor:
        return self._plan_question.expand(batch, -1).clone()

    # -- perception --------------------------------------------------------

    def new_memory(self) -> MemoryBank:
        return self.qt.new_memory()

    def perceive(
        self, observations: list[SceneObservation], memory: MemoryBank, frame_time: int
    ) -> QTOutput:
        return self.qt(self.encoder(observations), memory, frame_time)

    # -- reasoning ---------------------------------------------------------

    def reason_vqa(self, qtout: QTOutput, question_ids: torch.Tensor, answer_ids: torch.Tensor):
        """Teacher-forced text-only pass; returns (l_ce, ReasonerOutput).

        A single scene broadcasts across a batch of question/answer pairs.
        """
        b = question_ids.shape[0]
        scene, history = qtout.scene_tokens, qtout.history_tokens
        if scene.shape[0] == 1 and b > 1:
            scene = scene.expand(b, -1, -1)
            history = history.expand(b, -1, -1)
        inp = ReasonerInput(
            scene_tokens=scene,
            history_tokens=history,
            question_ids=question_ids,
            answer_ids=answer_ids,
            include_plan=False,
        )
        out = self.reasoner(inp)
        targets, mask = answer_targets(inp, out.layout, self.vocab)
        return ce_loss(out.logits, targets, mask), out

    def reason_plan(self, qtout: QTOutput, answer_ids: torch.Tensor):
        """Teacher-forced planning pass; returns (l_ce, PlanningToken)."""
        b = qtout.scene_tokens.shape[0]
        inp = ReasonerInput(
            scene_tokens=qtout.scene_tokens,
            history_tokens=qtout.history_tokens,
            question_ids=self.planning_questions(b).to(qtout.scene_tokens.device),
            answer_ids=answer_ids,
            include_plan=True,
        )
        out = self.reasoner(inp)
        targets, mask = answer_targets(inp, out.layout, self.vocab)
        return ce_loss(out.logits, targets, mask), out.planning_token

    def generate_plan(
        self, qtout: QTOutput, command
    ) -> tuple[PlanOutput, GenerateResult]:
        """Inference: generate the action answer, then plan off the PLAN state."""
        b = qtout.scene_tokens.shape[0]
        inp = ReasonerInput(
            scene_tokens=qtout.scene_tokens,
            history_tokens=qtout.history_tokens,
            question_ids=self.planning_questions(b).to(qtout.scene_tokens.device),
            include_plan=True,
        )
        gen = self.reasoner.generate(inp)
        plan = self.planner.plan(gen.planning_token, command, mode="eval")
        return plan, gen

    # -- planning ----------------------------------------------------------

    def plan_losses(
        self,
        planning_token: PlanningToken,
        command,
        gt,
        agent_futures=None,
        generator: Optional[torch.Generator] = None,
    ) -> tuple[LossBreakdown, PlanOutput]:
        out = self.planner.plan(
            planning_token, command, mode="train", gt=gt,
            agent_futures=agent_futures, generator=generator,
        )
        return out.losses, out

    def set_anchors(self, anchors: AnchorSet) -> None:
        if self.cfg.planner_kind != "diffusion":
            raise ContractViolation("anchors only apply to the diffusion planner")
        self.planner.set_anchors(anchors)


class ModelPolicy:
    """Closed-loop adapter: one full model pass per replanning tick.

    Memory and the frame clock are episode state; call reset() before each
    episode so history never leaks across runs.
    """

    def __init__(self, model: DrivingModel):
        self.model = model
        self.last_answer: str = ""
        self.reset()

    def reset(self) -> None:
        self.memory = self.model.new_memory()
        self.frame_time = 0

    def plan(self, obs: SceneObservation) -> Trajectory:
        model = self.model
        was_training = model.training
        model.eval()
        try:
            with torch.no_grad():
                qtout = model.perceive([obs], self.memory, self.frame_time)
                self.frame_time += 1
                plan, gen = model.generate_plan(qtout, obs.ego.command)
                self.last_answer = model.vocab.decode(gen.answer_ids[0])
                waypoints = plan.selected[0].detach().cpu().double().numpy()
        finally:
            if was_training:
                model.train()
        return Trajectory(waypoints=waypoints, dt=PLAN_DT)
