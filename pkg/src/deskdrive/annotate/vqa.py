"""VQA pair emission, the frame-history queue, and the clip pipeline."""

from __future__ import annotations

import json
import logging
import zlib
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core import NavigationCommand, SpeedDecision
from .critical import CriticalObject, select_critical
from .describe import DescribeError, Describer, Description, MockDescriber, describe, quantize
from .prompts import build_prompts
from .templates import (
    HISTORY_BEHAVIOR_ID,
    HISTORY_LIGHT_RANGE,
    HISTORY_OBJECT_RANGE,
    HISTORY_SPEED_ID,
    HISTORY_TEMPLATES,
    QUESTION_TEMPLATES,
    VQA_TYPES,
)

log = logging.getLogger(__name__)

HISTORY_DEPTH = 5  # preceding frames kept alongside the current one
MANIFEST_FORMAT = "vqa/1"
COORDINATE_NOTE = "object positions are ego-frame meters, not image pixels"
IN_FLIGHT_WINDOW = 4  # concurrent remote describe calls


@dataclass(frozen=True)
class VQAPair:
    question: str
    answer: str
    type: str
    frame_ref: str
    template_id: int

    def __post_init__(self):
        if self.type not in VQA_TYPES:
            raise ValueError(f"unknown VQA type {self.type!r}")

    def to_json(self) -> dict:
        return {
            "question": self.question,
            "answer": self.answer,
            "type": self.type,
            "frame_ref": self.frame_ref,
            "template_id": self.template_id,
        }


@dataclass(frozen=True)
class FrameSummary:
    """Per-frame record kept in the history queue."""

    light: str
    critical_ids: tuple[str, ...]
    critical_kinds: tuple[str, ...]  # aligned with critical_ids
    positions: tuple[tuple[float, float], ...]  # aligned with critical_ids
    ego_speed: float
    ego_action: str


class HistoryQueue:
    """Ring of the most recent frame summaries, oldest evicted first."""

    def __init__(self, depth: int = HISTORY_DEPTH):
        self.depth = depth
        self._buf: deque[FrameSummary] = deque(maxlen=depth)

    def push(self, summary: FrameSummary) -> None:
        self._buf.append(summary)

    def records(self) -> tuple[FrameSummary, ...]:
        return tuple(self._buf)

    @property
    def last(self) -> Optional[FrameSummary]:
        return self._buf[-1] if self._buf else None

    def __len__(self) -> int:
        return len(self._buf)


def update_history(queue: HistoryQueue, frame_summary: FrameSummary) -> HistoryQueue:
    queue.push(frame_summary)
    return queue


def pick_template(seed: int, frame_ref: str, qtype: str, n: int) -> int:
    """Stable seeded choice, independent of processing order and platform."""
    key = f"{seed}:{frame_ref}:{qtype}".encode()
    return zlib.crc32(key) % n


def _kinds_phrase(ids: set[str], summary: FrameSummary) -> str:
    kinds = sorted({summary.critical_kinds[summary.critical_ids.index(i)] for i in ids})
    return ", ".join(kinds)


def history_answer(
    template_id: int, current: FrameSummary, history: HistoryQueue
) -> str:
    prev = history.last
    if prev is None:
        return "no prior information available."

    if template_id in HISTORY_OBJECT_RANGE:
        cur_ids, prev_ids = set(current.critical_ids), set(prev.critical_ids)
        new, gone = cur_ids - prev_ids, prev_ids - cur_ids
        parts = []
        if new:
            parts.append(f"new critical objects: {_kinds_phrase(new, current)}")
        if gone:
            parts.append(f"cleared critical objects: {_kinds_phrase(gone, prev)}")
        answer = "; ".join(parts) + "." if parts else "the critical objects are unchanged."
    elif template_id in HISTORY_LIGHT_RANGE:
        window = history.records() + (current,)
        active = [s.light for s in window if s.light in ("red", "yellow")]
        if active:
            answer = f"yes, a {active[-1]} light affected the driving strategy."
        else:
            answer = "no, no traffic light affected the driving strategy."
    elif template_id == HISTORY_SPEED_ID:
        dv = current.ego_speed - prev.ego_speed
        a, b = quantize(prev.ego_speed), quantize(current.ego_speed)
        if dv > 0.25:
            answer = f"the speed increased from {a} to {b} m/s."
        elif dv < -0.25:
            answer = f"the speed decreased from {a} to {b} m/s."
        else:
            answer = f"the speed stayed near {b} m/s."
    elif template_id == HISTORY_BEHAVIOR_ID:
        answer = f"the previous behavior was {prev.ego_action}."
    else:
        raise ValueError(f"history template id {template_id} out of range")

    if prev.light != current.light:
        answer += f" the light changed from {prev.light} to {current.light}."
    return answer


def emit_vqa(
    frame_ref: str,
    described: Description,
    current: FrameSummary,
    history: HistoryQueue,
    *,
    seed: int = 0,
) -> list[VQAPair]:
    """One pair per applicable family; template choice is seeded-deterministic."""
    pairs = []

    tid = pick_template(seed, frame_ref, "scene_description", 12)
    pairs.append(
        VQAPair(
            QUESTION_TEMPLATES["scene_description"][tid],
            described.description,
            "scene_description",
            frame_ref,
            tid,
        )
    )
    if described.critical_objects:
        tid = pick_template(seed, frame_ref, "critical_objects", 5)
        answer = "; ".join(described.critical_objects) + "."
        pairs.append(
            VQAPair(QUESTION_TEMPLATES["critical_objects"][tid], answer, "critical_objects", frame_ref, tid)
        )
    tid = pick_template(seed, frame_ref, "action_reasoning", 2)
    pairs.append(
        VQAPair(QUESTION_TEMPLATES["action_reasoning"][tid], described.action, "action_reasoning", frame_ref, tid)
    )
    tid = pick_template(seed, frame_ref, "history", len(HISTORY_TEMPLATES))
    pairs.append(
        VQAPair(
            QUESTION_TEMPLATES["history"][tid],
            history_answer(tid, current, history),
            "history",
            frame_ref,
            tid,
        )
    )
    return pairs


def frame_meta(frame, criticals: Sequence[CriticalObject], frame_ref: str) -> dict:
    """Ground-truth facts handed to the describer (and serialized to remotes)."""
    ego_speed = float(frame.obs.ego.speed)
    entries = []
    for c in criticals:
        entries.append(
            {
                "id": c.id,
                "kind": c.kind,
                "x": float(c.position_3d[0]),
                "y": float(c.position_3d[1]),
                "vy": float(c.velocity[1]),
                "speed": float(np.linalg.norm(c.velocity)),
                "slower": bool(c.velocity[0] < ego_speed - 0.5),
                "reasons": list(c.reasons),
            }
        )
    return {
        "frame_ref": frame_ref,
        "light": frame.obs.light.value,
        "ego_speed": ego_speed,
        "speed_decision": frame.speed_decision.text,
        "path_decision": frame.command.text,
        "criticals": entries,
    }


def summarize(meta: dict, described: Description) -> FrameSummary:
    return FrameSummary(
        light=meta["light"],
        critical_ids=tuple(c["id"] for c in meta["criticals"]),
        critical_kinds=tuple(c["kind"] for c in meta["criticals"]),
        positions=tuple((c["x"], c["y"]) for c in meta["criticals"]),
        ego_speed=meta["ego_speed"],
        ego_action=described.action,
    )


@dataclass
class AnnotationResult:
    pairs: list[VQAPair]
    manifest: dict = field(default_factory=dict)


def annotate_clips(
    clips,
    client: Optional[Describer] = None,
    *,
    seed: int = 0,
    allow_fallback: bool = True,
    retries: int = 3,
    backoff_base: float = 0.25,
) -> AnnotationResult:
    """Run the full pipeline over dataset clips.

    Mock path is serial and deterministic; remote clients get a bounded
    in-flight window with results reduced in frame order.
    """
    mock = isinstance(client, MockDescriber) or client is None
    if client is None:
        client = MockDescriber()
    fallback = MockDescriber() if allow_fallback else None

    staged = []  # (frame_ref, prompts, meta)
    for clip in clips:
        for idx, frame in enumerate(clip.frames):
            frame_ref = f"{clip.scenario_id}/{idx:03d}"
            criticals = select_critical(frame.obs)
            prompts = build_prompts(
                frame.obs, criticals, frame.obs.ego, (frame.speed_decision, frame.command)
            )
            staged.append((clip.scenario_id, frame_ref, prompts, frame_meta(frame, criticals, frame_ref)))

    def run_one(item):
        _, _, prompts, meta = item
        return describe(
            prompts, meta, client,
            retries=retries, backoff_base=backoff_base, fallback=fallback,
        )

    described: list[Optional[Description]] = []
    skipped = 0
    if mock:
        for item in staged:
            described.append(run_one(item))
    else:
        with ThreadPoolExecutor(max_workers=IN_FLIGHT_WINDOW) as pool:
            futures = [pool.submit(run_one, item) for item in staged]
            for item, fut in zip(staged, futures):
                try:
                    described.append(fut.result())
                except DescribeError as e:
                    log.warning("skipping frame %s: %s", item[1], e)
                    described.append(None)
                    skipped += 1

    pairs: list[VQAPair] = []
    counts = {t: 0 for t in VQA_TYPES}
    history = HistoryQueue()
    current_scenario = None
    for (scenario_id, frame_ref, _, meta), desc in zip(staged, described):
        if scenario_id != current_scenario:
            history = HistoryQueue()
            current_scenario = scenario_id
        if desc is None:
            continue
        summary = summarize(meta, desc)
        new_pairs = emit_vqa(frame_ref, desc, summary, history, seed=seed)
        for p in new_pairs:
            counts[p.type] += 1
        pairs.extend(new_pairs)
        update_history(history, summary)

    manifest = {
        "format": MANIFEST_FORMAT,
        "seed": seed,
        "frames": len(staged),
        "skipped": skipped,
        "pairs": len(pairs),
        "counts": counts,
        "coordinate_note": COORDINATE_NOTE,
    }
    return AnnotationResult(pairs, manifest)


def vqa_jsonl_lines(pairs: Sequence[VQAPair]) -> list[str]:
    return [json.dumps(p.to_json(), sort_keys=True, separators=(",", ":")) for p in pairs]


def write_vqa_jsonl(result: AnnotationResult, path: str | Path) -> Path:
    path = Path(path)
    path.write_text("\n".join(vqa_jsonl_lines(result.pairs)) + "\n")
    manifest_path = path.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(result.manifest, sort_keys=True, indent=2) + "\n")
    return manifest_path


def load_vqa_jsonl(path: str | Path) -> list[VQAPair]:
    pairs = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        pairs.append(VQAPair(d["question"], d["answer"], d["type"], d["frame_ref"], d["template_id"]))
    return pairs
