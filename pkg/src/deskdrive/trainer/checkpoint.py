"""Self-describing model checkpoints with bit-exact round-trip."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Optional

import torch

from deskdrive.core import ContractViolation
from deskdrive.model import DrivingModel, DrivingModelConfig
from deskdrive.planner import DiffusionConfig, PlannerConfig
from deskdrive.qtformer import QTFormerConfig
from deskdrive.reasoner import ReasonerConfig, Vocabulary

FORMAT_VERSION = "ckpt/1"


def config_to_dict(cfg: DrivingModelConfig) -> dict:
    return asdict(cfg)


def config_from_dict(data: dict) -> DrivingModelConfig:
    return DrivingModelConfig(
        planner_kind=data["planner_kind"],
        vel_noise_std=data["vel_noise_std"],
        qt=QTFormerConfig(**data["qt"]),
        reasoner=ReasonerConfig(**data["reasoner"]),
        vae=PlannerConfig(**data["vae"]),
        diffusion=DiffusionConfig(**data["diffusion"]),
    )


def save_checkpoint(
    path,
    model: DrivingModel,
    stage: str,
    step: int,
    seed: int,
    loss_weights: Optional[dict[str, float]] = None,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "config": config_to_dict(model.cfg),
        "vocab": list(model.vocab.tokens),
        "stage": stage,
        "step": int(step),
        "seed": int(seed),
        "loss_weights": dict(loss_weights or {}),
        "state_dict": model.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[DrivingModel, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ContractViolation(f"unsupported checkpoint format {version!r}")
    cfg = config_from_dict(payload["config"])
    vocab = Vocabulary(tuple(payload["vocab"]))
    model = DrivingModel(cfg, vocab)
    model.load_state_dict(payload["state_dict"], strict=True)
    meta = {
        "stage": payload["stage"],
        "step": payload["step"],
        "seed": payload["seed"],
        "loss_weights": payload["loss_weights"],
    }
    return model, meta
