"""Bit-stable JSON Lines export of recorded episodes for regression diffs."""

from __future__ import annotations

import json
from pathlib import Path

from .runner import EpisodeRecord

SCHEMA = "simworld/1"
_NDIGITS = 4


def _r(x: float) -> float:
    v = round(float(x), _NDIGITS)
    return 0.0 if v == 0.0 else v  # normalize -0.0


def replay_lines(record: EpisodeRecord) -> list[str]:
    res = record.result
    header = {
        "schema": SCHEMA,
        "scenario_id": res.scenario_id,
        "family": res.family,
        "seed": res.seed,
        "success": res.success,
        "route_completion": _r(res.route_completion),
        "infractions": res.infractions,
        "duration": _r(res.duration),
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for s in record.states:
        row = {
            "t": _r(s.t),
            "ego": [_r(s.ego_x), _r(s.ego_y), _r(s.ego_heading), _r(s.ego_speed)],
            "agents": [
                [aid, _r(x), _r(y), _r(vx), _r(vy), kind, _r(r)]
                for aid, x, y, vx, vy, kind, r in s.agents
            ],
            "light": s.light.value,
            "progress": _r(s.progress),
            "command": int(s.command),
        }
        lines.append(json.dumps(row, sort_keys=True, separators=(",", ":")))
    return lines


def write_replay(record: EpisodeRecord, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(replay_lines(record)) + "\n")
    return path
