"""INI configuration: every tunable constant in one sectioned file.

Two named profiles: `desk` (default, minutes on a laptop) and `paper`
(published query counts and batch size, kept for documentation). Sections
marked fixed document constants baked into the code; editing them raises
so the file can never silently disagree with the implementation.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from deskdrive.annotate import HISTORY_DEPTH
from deskdrive.annotate.critical import HALF_LANE, LANE_SPACING, TTC_HORIZON, VRU_RADIUS
from deskdrive.core import LOSS_KEYS
from deskdrive.model import DrivingModelConfig
from deskdrive.planner import DiffusionConfig, PlannerConfig
from deskdrive.qtformer import QTFormerConfig
from deskdrive.reasoner import ReasonerConfig
from deskdrive.simworld import FAMILIES, GT_HORIZON, HELD_OUT_FAMILIES, PLAN_DT

PROFILES = ("desk", "paper")


class ConfigError(Exception):
    """Malformed or inconsistent configuration; CLI maps this to exit 2."""


# Single source for defaults; paper profile overlays the published values.
_DESK: dict[str, dict[str, str]] = {
    "run": {"profile": "desk", "seed": "0"},
    "data": {
        "n_clips": "200",
        "max_frames_per_clip": "20",
        "families": ",".join(FAMILIES),
        "vqa": "true",
        "history_questions": "true",
    },
    "model": {"planner": "vae", "vel_noise_std": "0.35"},
    "qt": {
        "n_scene": "32",
        "n_perception": "32",
        "n_history": "8",
        "c_q": "64",
        "c_out": "64",
        "n_heads": "2",
        "memory_slots": "16",
        "k_motion": "3",
        "motion_horizon": "4",
        "ffn_mult": "4",
    },
    "reasoner": {
        "n_layers": "4",
        "d_model": "64",
        "n_heads": "4",
        "context": "512",
        "ffn_mult": "4",
        "adapter_rank": "4",
        "max_answer_tokens": "64",
    },
    "vae": {
        "d_z": "32",
        "hidden": "64",
        "horizon": "4",
        "n_commands": "6",
        "kl_reverse": "false",
    },
    "diffusion": {
        "n_modes": "20",
        "n_steps": "50",
        "beta_start": "1e-4",
        "beta_end": "0.02",
        "hidden": "128",
        "t_embed_dim": "32",
    },
    "train": {
        "epochs": "6",
        "batch_size": "8",
        "lr": "1e-3",
        "vae_warmup_frac": "0.1",
    },
    "loss_weights": {key: "1.0" for key in LOSS_KEYS},
    "eval": {
        "open_clips": "12",
        "closed_families": ",".join(HELD_OUT_FAMILIES),
        "closed_seeds": "10",
        "closed_seed_offset": "1000",
        "workers": "1",
    },
    "annotate": {
        "ttc_horizon": str(TTC_HORIZON),
        "vru_radius": str(VRU_RADIUS),
        "half_lane": str(HALF_LANE),
        "lane_spacing": str(LANE_SPACING),
        "history_depth": str(HISTORY_DEPTH),
        "retries": "3",
        "backoff_base": "0.25",
    },
    # Fixed world and loss constants, recorded for reference; the loader
    # rejects edits so the file cannot drift from the code.
    "fixed": {
        "plan_dt": str(PLAN_DT),
        "plan_horizon": str(GT_HORIZON),
        "lane_half_width": "3.5",
        "collision_margin": "0.5",
        "boundary_margin": "0.5",
        "ego_radius": "1.0",
        "focal_alpha": "0.25",
        "focal_gamma": "2.0",
    },
}

_PAPER_OVERLAY: dict[str, dict[str, str]] = {
    "run": {"profile": "paper"},
    "qt": {"n_scene": "512", "n_perception": "600", "n_history": "16"},
    "train": {"batch_size": "32"},
}


@dataclass(frozen=True)
class DataSettings:
    n_clips: int
    max_frames_per_clip: Optional[int]
    families: tuple[str, ...]
    vqa: bool
    history_questions: bool


@dataclass(frozen=True)
class TrainSettings:
    epochs: int
    batch_size: int
    lr: float
    vae_warmup_frac: float
    loss_weights: dict[str, float] = field(hash=False, default_factory=dict)


@dataclass(frozen=True)
class EvalSettings:
    open_clips: int
    closed_families: tuple[str, ...]
    closed_seeds: int
    closed_seed_offset: int
    workers: int


@dataclass(frozen=True)
class RunConfig:
    profile: str
    seed: int
    model: DrivingModelConfig
    data: DataSettings
    train: TrainSettings
    eval: EvalSettings


def default_parser(profile: str = "desk") -> configparser.ConfigParser:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    cp = configparser.ConfigParser()
    cp.read_dict(_DESK)
    if profile == "paper":
        cp.read_dict(_PAPER_OVERLAY)
    return cp


def write_default_config(path, profile: str = "desk") -> None:
    cp = default_parser(profile)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        cp.write(fh)


def _get(cp, section, key, conv, what):
    try:
        raw = cp.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(f"missing [{section}] {key}") from exc
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}={raw!r} is not a valid {what}") from exc


def _int(cp, section, key) -> int:
    return _get(cp, section, key, int, "integer")


def _float(cp, section, key) -> float:
    value = _get(cp, section, key, float, "number")
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key} must be finite")
    return value


def _bool(cp, section, key) -> bool:
    raw = _get(cp, section, key, str, "boolean").strip().lower()
    if raw in ("true", "1", "yes", "on"):
        return True
    if raw in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}={raw!r} is not a valid boolean")


def _names(cp, section, key, allowed) -> tuple[str, ...]:
    raw = _get(cp, section, key, str, "name list")
    names = tuple(n.strip() for n in raw.split(",") if n.strip())
    bad = [n for n in names if n not in allowed]
    if bad:
        raise ConfigError(f"[{section}] {key}: unknown names {bad}")
    if not names:
        raise ConfigError(f"[{section}] {key} must name at least one entry")
    return names


def _validate_shape(cp: configparser.ConfigParser) -> None:
    known = set(_DESK)
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
        extra = set(cp.options(section)) - set(_DESK[section])
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
    for section, key in (("fixed", k) for k in _DESK["fixed"]):
        if cp.has_section("fixed") and cp.get(section, key) != _DESK["fixed"][key]:
            raise ConfigError(
                f"[fixed] {key} is baked into the code and cannot be changed here"
            )


def parse_run_config(cp: configparser.ConfigParser) -> RunConfig:
    _validate_shape(cp)
    profile = cp.get("run", "profile", fallback="desk")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    planner = cp.get("model", "planner", fallback="vae")
    d_model = _int(cp, "reasoner", "d_model")
    qt = QTFormerConfig(
        n_scene=_int(cp, "qt", "n_scene"),
        n_perception=_int(cp, "qt", "n_perception"),
        n_history=_int(cp, "qt", "n_history"),
        c_q=_int(cp, "qt", "c_q"),
        c_out=_int(cp, "qt", "c_out"),
        n_heads=_int(cp, "qt", "n_heads"),
        memory_slots=_int(cp, "qt", "memory_slots"),
        k_motion=_int(cp, "qt", "k_motion"),
        motion_horizon=_int(cp, "qt", "motion_horizon"),
        ffn_mult=_int(cp, "qt", "ffn_mult"),
    )
    reasoner = ReasonerConfig(
        n_layers=_int(cp, "reasoner", "n_layers"),
        d_model=d_model,
        n_heads=_int(cp, "reasoner", "n_heads"),
        context=_int(cp, "reasoner", "context"),
        ffn_mult=_int(cp, "reasoner", "ffn_mult"),
        adapter_rank=_int(cp, "reasoner", "adapter_rank"),
        max_answer_tokens=_int(cp, "reasoner", "max_answer_tokens"),
    )
    # Planner widths follow the reasoner: the planning token is its input.
    vae = PlannerConfig(
        token_dim=d_model,
        d_z=_int(cp, "vae", "d_z"),
        hidden=_int(cp, "vae", "hidden"),
        horizon=_int(cp, "vae", "horizon"),
        n_commands=_int(cp, "vae", "n_commands"),
        kl_reverse=_bool(cp, "vae", "kl_reverse"),
    )
    diffusion = DiffusionConfig(
        token_dim=d_model,
        horizon=_int(cp, "vae", "horizon"),
        n_modes=_int(cp, "diffusion", "n_modes"),
        n_steps=_int(cp, "diffusion", "n_steps"),
        beta_start=_float(cp, "diffusion", "beta_start"),
        beta_end=_float(cp, "diffusion", "beta_end"),
        hidden=_int(cp, "diffusion", "hidden"),
        t_embed_dim=_int(cp, "diffusion", "t_embed_dim"),
    )
    try:
        model = DrivingModelConfig(
            planner_kind=planner,
            vel_noise_std=_float(cp, "model", "vel_noise_std"),
            qt=qt,
            reasoner=reasoner,
            vae=vae,
            diffusion=diffusion,
        )
    except Exception as exc:
        raise ConfigError(f"inconsistent model configuration: {exc}") from exc
    max_frames = _int(cp, "data", "max_frames_per_clip")
    data = DataSettings(
        n_clips=_int(cp, "data", "n_clips"),
        max_frames_per_clip=max_frames if max_frames > 0 else None,
        families=_names(cp, "data", "families", FAMILIES),
        vqa=_bool(cp, "data", "vqa"),
        history_questions=_bool(cp, "data", "history_questions"),
    )
    weights = {key: _float(cp, "loss_weights", key) for key in LOSS_KEYS}
    train = TrainSettings(
        epochs=_int(cp, "train", "epochs"),
        batch_size=_int(cp, "train", "batch_size"),
        lr=_float(cp, "train", "lr"),
        vae_warmup_frac=_float(cp, "train", "vae_warmup_frac"),
        loss_weights=weights,
    )
    eval_s = EvalSettings(
        open_clips=_int(cp, "eval", "open_clips"),
        closed_families=_names(cp, "eval", "closed_families", FAMILIES),
        closed_seeds=_int(cp, "eval", "closed_seeds"),
        closed_seed_offset=_int(cp, "eval", "closed_seed_offset"),
        workers=_int(cp, "eval", "workers"),
    )
    if train.epochs < 1 or train.batch_size < 1 or train.lr <= 0:
        raise ConfigError("[train] epochs/batch_size must be >= 1 and lr > 0")
    if data.n_clips < 1 or eval_s.closed_seeds < 1 or eval_s.workers < 1:
        raise ConfigError("[data]/[eval] counts must be >= 1")
    return RunConfig(
        profile=profile,
        seed=_int(cp, "run", "seed"),
        model=model,
        data=data,
        train=train,
        eval=eval_s,
    )


def load_config(
    path=None,
    profile: Optional[str] = None,
    planner: Optional[str] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """Layering: profile defaults, then the file, then explicit flags."""
    base_profile = profile or "desk"
    if path is not None and profile is None:
        probe = configparser.ConfigParser()
        if not probe.read(str(path)):
            raise ConfigError(f"cannot read config file {path}")
        base_profile = probe.get("run", "profile", fallback="desk")
    cp = default_parser(base_profile)
    if path is not None:
        if not cp.read(str(path)):
            raise ConfigError(f"cannot read config file {path}")
    if profile is not None:
        cp.set("run", "profile", profile)
    if planner is not None:
        cp.set("model", "planner", planner)
    if seed is not None:
        cp.set("run", "seed", str(seed))
    return parse_run_config(cp)
