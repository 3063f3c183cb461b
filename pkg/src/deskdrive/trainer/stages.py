"""Stage presets, loss aggregation, and component freeze masks.

Three sequential stages: vision-language alignment (planner frozen, text and
perception supervision), language-action alignment (reasoner base frozen with
adapters trainable, planner losses, no VQA), and end-to-end fine-tuning (same
freeze, every loss, joint VQA + planning batches).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import torch

from deskdrive.core import ContractViolation, LOSS_KEYS, LossBreakdown
from deskdrive.model import DrivingModel

QT_LOSSES = ("l_cls", "l_reg", "l_tra", "l_mcls", "l_mreg")
PLANNER_LOSSES = ("l_vae", "l_mse", "l_col", "l_bd")
STAGE_NAMES = ("vl_align", "la_align", "e2e_ft")
COMPONENTS = ("encoder", "qt", "reasoner_base", "reasoner_adapters", "planner")


@dataclass(frozen=True)
class StageConfig:
    stage: str
    frozen: frozenset = frozenset()
    active_losses: frozenset = frozenset()
    epochs: int = 6
    batch_size: int = 8
    include_vqa: bool = True
    include_planning: bool = True

    def __post_init__(self):
        if self.stage not in STAGE_NAMES:
            raise ContractViolation(f"unknown stage {self.stage!r}")
        bad = self.frozen - set(COMPONENTS)
        if bad:
            raise ContractViolation(f"unknown frozen components {sorted(bad)}")
        bad = self.active_losses - set(LOSS_KEYS)
        if bad:
            raise ContractViolation(f"unknown loss keys {sorted(bad)}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("epochs and batch_size must be >= 1")


def stage_preset(name: str, epochs: int = 6, batch_size: int = 8) -> StageConfig:
    if name == "vl_align":
        return StageConfig(
            stage=name,
            frozen=frozenset({"planner"}),
            active_losses=frozenset(QT_LOSSES) | {"l_ce"},
            epochs=epochs,
            batch_size=batch_size,
            include_vqa=True,
            include_planning=False,
        )
    if name == "la_align":
        return StageConfig(
            stage=name,
            frozen=frozenset({"reasoner_base"}),
            active_losses=frozenset(QT_LOSSES) | set(PLANNER_LOSSES),
            epochs=epochs,
            batch_size=batch_size,
            include_vqa=False,
            include_planning=True,
        )
    if name == "e2e_ft":
        return StageConfig(
            stage=name,
            frozen=frozenset({"reasoner_base"}),
            active_losses=frozenset(LOSS_KEYS),
            epochs=epochs,
            batch_size=batch_size,
            include_vqa=True,
            include_planning=True,
        )
    raise ContractViolation(f"unknown stage {name!r}")


def default_stages(epochs: int = 6, batch_size: int = 8) -> list[StageConfig]:
    return [stage_preset(n, epochs, batch_size) for n in STAGE_NAMES]


def drop_losses(stage: StageConfig, keys: Iterable[str]) -> StageConfig:
    return replace(stage, active_losses=stage.active_losses - set(keys))


def total_loss(
    parts: LossBreakdown, stage: StageConfig, weights: Optional[dict[str, float]] = None
) -> torch.Tensor:
    """Sum of stage-active components at configured (default unit) weights."""
    acc: Optional[torch.Tensor] = None
    for key, value in parts.present().items():
        if key not in stage.active_losses:
            continue
        w = 1.0 if weights is None else float(weights.get(key, 1.0))
        term = w * value
        acc = term if acc is None else acc + term
    return torch.zeros(()) if acc is None else acc


def component_parameters(model: DrivingModel, component: str):
    if component == "encoder":
        return list(model.encoder.parameters())
    if component == "qt":
        return list(model.qt.parameters())
    if component == "reasoner_base":
        return list(model.reasoner.base_parameters())
    if component == "reasoner_adapters":
        return list(model.reasoner.adapter_parameters())
    if component == "planner":
        return list(model.planner.parameters())
    raise ContractViolation(f"unknown component {component!r}")


def apply_freeze(model: DrivingModel, frozen: frozenset) -> None:
    """requires_grad masks for one stage; unlisted components train."""
    for component in COMPONENTS:
        trainable = component not in frozen
        for p in component_parameters(model, component):
            p.requires_grad_(trainable)
