"""Describer clients: a remote HTTP backend and a deterministic offline mock.

The mock is a pure function of ground-truth frame facts, so the annotation
pipeline is reproducible without a network. Its output wording is restricted
to the fragments in MOCK_PHRASES plus quantized numbers; the reasoner
vocabulary is harvested from exactly that material.
"""

from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

log = logging.getLogger(__name__)

DESCRIBER_URL_ENV = "DESKDRIVE_DESCRIBER_URL"
DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 3

REASON_PHRASES = {
    "ttc_collision": "collision risk",
    "lead_vehicle": "lead vehicle",
    "active_signal": "active signal",
    "vru": "vulnerable road user",
}

# Every literal fragment the mock (and the history answers in vqa.py) can emit.
# Keep in sync with the generators below; the vocabulary builder reads this.
MOCK_PHRASES = (
    "a red light ahead",
    "a green light ahead",
    "a yellow light ahead",
    "clear road ahead",
    "a slower lead vehicle ahead",
    "a lead vehicle ahead",
    "a pedestrian crossing nearby",
    "a pedestrian nearby",
    "collision risk within seconds",
    "ego speed m/s",
    "vehicle pedestrian static light",
    "m ahead , m behind ,",
    "to the left , to the right ,",
    "speed m/s , state , flagged",
    "collision risk and lead vehicle and active signal and vulnerable road user",
    "keep accelerate decelerate",
    "left right straight lane follow change lane left change lane right",
    "and . ; < > [ ]",
    "no prior information available .",
    "the critical objects are unchanged .",
    "new critical objects : ; cleared critical objects :",
    "yes , a red light affected the driving strategy .",
    "yes , a yellow light affected the driving strategy .",
    "no , no traffic light affected the driving strategy .",
    "the speed increased from to m/s .",
    "the speed decreased from to m/s .",
    "the speed stayed near m/s .",
    "the previous behavior was .",
    "the light changed from to .",
    "none red green yellow",
    "what should the ego vehicle do next ?",
)


class DescribeError(RuntimeError):
    """Transport failure or a response that does not match the schema."""


@dataclass(frozen=True)
class Description:
    description: str
    critical_objects: tuple[str, ...]
    action: str

    def to_json(self) -> dict:
        return {
            "description": self.description,
            "critical_objects": list(self.critical_objects),
            "action": self.action,
        }


def parse_description(payload: object) -> Description:
    """Validate the {description, critical_objects, action} schema."""
    if not isinstance(payload, dict):
        raise DescribeError(f"response is not an object: {type(payload).__name__}")
    missing = {"description", "critical_objects", "action"} - payload.keys()
    if missing:
        raise DescribeError(f"response missing fields {sorted(missing)}")
    desc, action = payload["description"], payload["action"]
    objs = payload["critical_objects"]
    if isinstance(objs, str):
        objs = [objs] if objs else []
    if not isinstance(desc, str) or not isinstance(action, str) or not isinstance(objs, list):
        raise DescribeError("response field types invalid")
    if not all(isinstance(o, str) for o in objs):
        raise DescribeError("critical_objects entries must be strings")
    return Description(desc, tuple(objs), action)


class Describer(Protocol):
    def describe(self, prompts: Sequence[Optional[str]], frame_meta: dict) -> Description: ...


def quantize(x: float, lo: float = 0.0, hi: float = 50.0) -> str:
    """Snap to the 0.5 grid inside [lo, hi]; matches the number vocabulary."""
    return f"{min(hi, max(lo, round(float(x) * 2.0) / 2.0)):.1f}"


class MockDescriber:
    """Deterministic rule-based describer computed from ground truth."""

    def describe(self, prompts: Sequence[Optional[str]], frame_meta: dict) -> Description:
        light = frame_meta["light"]
        criticals = frame_meta["criticals"]
        ego_speed = frame_meta["ego_speed"]

        clauses = []
        if light in ("red", "green", "yellow"):
            clauses.append(f"a {light} light ahead")
        else:
            clauses.append("clear road ahead")
        leads = [c for c in criticals if "lead_vehicle" in c["reasons"]]
        if leads:
            slower = any(c["slower"] for c in leads)
            clauses.append("a slower lead vehicle ahead" if slower else "a lead vehicle ahead")
        vrus = [c for c in criticals if "vru" in c["reasons"]]
        if vrus:
            crossing = any(abs(c["vy"]) > 0.1 for c in vrus)
            clauses.append("a pedestrian crossing nearby" if crossing else "a pedestrian nearby")
        if any("ttc_collision" in c["reasons"] for c in criticals):
            clauses.append("collision risk within 3.0 seconds")
        clauses.append(f"ego speed {quantize(ego_speed)} m/s")
        description = "; ".join(clauses) + "."

        objects = tuple(self._object_clause(c, light) for c in criticals)
        action = f"{frame_meta['speed_decision']} and {frame_meta['path_decision']}"
        return Description(description, objects, action)

    @staticmethod
    def _object_clause(c: dict, light: str) -> str:
        reasons = " and ".join(REASON_PHRASES[r] for r in c["reasons"])
        if c["kind"] == "light":
            return f"light {quantize(c['x'])} m ahead, state {light}, flagged {reasons}"
        side = "ahead" if c["x"] >= 0 else "behind"
        clause = f"{c['kind']} {quantize(abs(c['x']))} m {side}"
        lat = quantize(abs(c["y"]))
        if lat != "0.0":
            clause += f", {lat} m to the {'left' if c['y'] > 0 else 'right'}"
        clause += f", speed {quantize(c['speed'])} m/s, flagged {reasons}"
        return clause


class RemoteDescriber:
    """HTTP describer: POST {prompts, frames_meta}, JSON response."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> Optional["RemoteDescriber"]:
        import os

        url = os.environ.get(DESCRIBER_URL_ENV)
        return cls(url) if url else None

    def describe(self, prompts: Sequence[Optional[str]], frame_meta: dict) -> Description:
        body = json.dumps(
            {"prompts": [p for p in prompts if p is not None], "frames_meta": frame_meta}
        ).encode()
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read()
        except (urllib.error.URLError, OSError) as e:
            raise DescribeError(f"describer request failed: {e}") from e
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as e:
            raise DescribeError(f"describer returned non-JSON: {e}") from e
        return parse_description(payload)


def describe(
    prompts: Sequence[Optional[str]],
    frame_meta: dict,
    client: Describer,
    *,
    retries: int = DEFAULT_RETRIES,
    backoff_base: float = 0.25,
    backoff_cap: float = 4.0,
    fallback: Optional[Describer] = MockDescriber(),
    sleep=time.sleep,
) -> Description:
    """Query `client` with bounded exponential backoff, then fall back.

    With `fallback=None` the last error propagates so the caller can skip the
    frame instead.
    """
    last: Optional[DescribeError] = None
    for attempt in range(retries + 1):
        try:
            return client.describe(prompts, frame_meta)
        except DescribeError as e:
            last = e
            if attempt < retries:
                sleep(min(backoff_cap, backoff_base * (2.0 ** attempt)))
    if fallback is None:
        assert last is not None
        raise last
    log.warning(
        "describer failed after %d attempts for %s: %s; using mock fallback",
        retries + 1,
        frame_meta.get("frame_ref", "?"),
        last,
    )
    return fallback.describe(prompts, frame_meta)
