"""Dataset assembly: expert clips plus auto-annotated VQA pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from deskdrive.annotate import VQAPair, annotate_clips
from deskdrive.core import ContractViolation
from deskdrive.simworld import (
    FAMILIES,
    Clip,
    extract_frames,
    make_scenario,
    run_episode,
)

CLIP_SEED_STRIDE = 10_007


@dataclass
class TrainingData:
    clips: list[Clip]
    vqa_by_frame: dict[str, list[VQAPair]] = field(default_factory=dict)

    def frame_ref(self, clip: Clip, index: int) -> str:
        # Matches the annotation pipeline's reference format.
        return f"{clip.scenario_id}/{index:03d}"

    def pairs_for(self, clip: Clip, index: int) -> list[VQAPair]:
        return self.vqa_by_frame.get(self.frame_ref(clip, index), [])

    @property
    def n_frames(self) -> int:
        return sum(len(c.frames) for c in self.clips)


def gen_clips(
    n_clips: int,
    seed: int = 0,
    families: Sequence[str] = FAMILIES,
    max_frames_per_clip: Optional[int] = None,
) -> list[Clip]:
    """Expert-driven recordings, families round-robin, one derived seed each."""
    if n_clips < 1:
        raise ContractViolation("need at least one clip")
    clips: list[Clip] = []
    for i in range(n_clips):
        family = families[i % len(families)]
        clip_seed = seed * CLIP_SEED_STRIDE + i
        scenario = make_scenario(family, clip_seed)
        record = run_episode(scenario, record=True)
        frames = extract_frames(record)
        if max_frames_per_clip is not None:
            frames = frames[:max_frames_per_clip]
        if not frames:
            continue
        clips.append(
            Clip(scenario_id=scenario.id, family=family, seed=clip_seed, frames=frames)
        )
    if not clips:
        raise ContractViolation("no usable clips generated")
    return clips


def build_dataset(
    n_clips: int,
    seed: int = 0,
    families: Sequence[str] = FAMILIES,
    with_vqa: bool = True,
    max_frames_per_clip: Optional[int] = None,
    include_history_questions: bool = True,
) -> TrainingData:
    clips = gen_clips(n_clips, seed, families, max_frames_per_clip)
    vqa_by_frame: dict[str, list[VQAPair]] = {}
    if with_vqa:
        result = annotate_clips(clips, seed=seed)
        for pair in result.pairs:
            if not include_history_questions and pair.type == "history":
                continue
            vqa_by_frame.setdefault(pair.frame_ref, []).append(pair)
    return TrainingData(clips=clips, vqa_by_frame=vqa_by_frame)
