"""Annotation pipeline tests: critical-object rules vs a sweep oracle,
prompt assembly, describer retry/fallback, history QA, and golden output."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pytest

from deskdrive.annotate import (
    ALL_TEMPLATES,
    CriticalObject,
    DescribeError,
    Description,
    FORMAT_NO_CRITICALS,
    FrameSummary,
    HistoryQueue,
    MockDescriber,
    QUESTION_TEMPLATES,
    annotate_clips,
    build_prompts,
    describe,
    emit_vqa,
    history_answer,
    load_vqa_jsonl,
    min_clearance,
    parse_description,
    select_critical,
    summarize,
    update_history,
    vqa_jsonl_lines,
)
from deskdrive.core import EgoStatus, NavigationCommand, SpeedDecision
from deskdrive.simworld import (
    AgentObs,
    Clip,
    LightState,
    SceneObservation,
    extract_frames,
    make_scenario,
    run_episode,
)

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_PATH = DATA_DIR / "vqa_golden.jsonl"


def make_obs(
    agents=(),
    ego_speed=8.0,
    ego_pos=(0.0, 0.0),
    heading=0.0,
    light=LightState.NONE,
    light_x=None,
):
    hist = np.array([[ego_pos[0] - 0.5 * ego_speed * (4 - k), ego_pos[1]] for k in range(4)])
    ego = EgoStatus(
        speed=ego_speed,
        heading=heading,
        position=np.array(ego_pos, dtype=float),
        history_positions=hist,
    )
    return SceneObservation(
        timestamp=0.0,
        ego=ego,
        agents=list(agents),
        light=light,
        light_position=None if light_x is None else np.array([light_x, 0.0]),
        route_progress=0.0,
        noise_seed=0,
    )


def agent(aid, x, y, vx=0.0, vy=0.0, kind="vehicle", radius=None):
    if radius is None:
        radius = 0.4 if kind == "pedestrian" else 1.0
    return AgentObs(
        id=aid,
        position=np.array([x, y], dtype=float),
        velocity=np.array([vx, vy], dtype=float),
        heading=0.0,
        radius=radius,
        kind=kind,
    )


def sweep_flags_collision(p_rel, v_rel, radius_sum, horizon=3.0, dt=0.01):
    ts = np.arange(0.0, horizon + 1e-9, dt)
    pts = np.asarray(p_rel)[None, :] + np.asarray(v_rel)[None, :] * ts[:, None]
    return bool((np.linalg.norm(pts, axis=1) - radius_sum < 0.0).any())


class TestSelectCritical:
    def test_ttc_25m_closing_10(self):
        # 25 m gap closing at 10 m/s: contact at (25-2)/10 = 2.3 s < 3 s.
        obs = make_obs([agent("a", 25.0, 0.0, vx=0.0)], ego_speed=10.0)
        [c] = select_critical(obs)
        assert "ttc_collision" in c.reasons

    def test_ttc_40m_closing_10_not_rule1(self):
        obs = make_obs([agent("a", 40.0, 0.0, vx=0.0)], ego_speed=10.0)
        [c] = select_critical(obs)
        assert "ttc_collision" not in c.reasons
        assert "lead_vehicle" in c.reasons

    def test_stationary_pedestrian_lateral_vru_only(self):
        obs = make_obs([agent("p", 0.0, 10.0, kind="pedestrian")], ego_speed=8.0)
        [c] = select_critical(obs)
        assert c.reasons == ("vru",)

    def test_pedestrian_beyond_20m_not_vru(self):
        obs = make_obs([agent("p", 0.0, 25.0, kind="pedestrian")], ego_speed=0.0)
        assert select_critical(obs) == []

    def test_nearest_lead_per_lane(self):
        obs = make_obs(
            [
                agent("far", 20.0, 0.0, vx=8.0),
                agent("near", 10.0, 0.3, vx=8.0),
                agent("adj", 15.0, 2.2, vx=8.0),
            ],
            ego_speed=8.0,
        )
        crit = {c.id: c for c in select_critical(obs)}
        assert "lead_vehicle" in crit["near"].reasons
        assert "lead_vehicle" in crit["adj"].reasons
        assert "far" not in crit

    def test_oncoming_vehicle_not_lead(self):
        obs = make_obs([agent("onc", 30.0, 0.0, vx=-10.0)], ego_speed=5.0)
        crit = {c.id: c for c in select_critical(obs)}
        assert "onc" not in crit or "lead_vehicle" not in crit["onc"].reasons

    def test_active_signal_red_ahead(self):
        obs = make_obs([], light=LightState.RED, light_x=30.0)
        [c] = select_critical(obs)
        assert c.id == "light" and c.reasons == ("active_signal",)
        assert c.position_3d[0] == pytest.approx(30.0)

    def test_green_or_passed_light_not_flagged(self):
        assert select_critical(make_obs([], light=LightState.GREEN, light_x=30.0)) == []
        passed = make_obs([], ego_pos=(40.0, 0.0), light=LightState.RED, light_x=30.0)
        assert select_critical(passed) == []

    def test_reasons_merge_on_one_object(self):
        obs = make_obs([agent("a", 12.0, 0.0, vx=0.0)], ego_speed=10.0)
        [c] = select_critical(obs)
        assert set(c.reasons) == {"ttc_collision", "lead_vehicle"}

    def test_reason_validation(self):
        with pytest.raises(Exception):
            CriticalObject("x", "vehicle", (), np.zeros(2), np.zeros(2))
        with pytest.raises(Exception):
            CriticalObject("x", "vehicle", ("bogus",), np.zeros(2), np.zeros(2))

    def test_rule1_matches_sweep_oracle_1000_cases(self):
        rng = np.random.default_rng(88)
        mismatches = 0
        for _ in range(1000):
            ego_speed = float(rng.uniform(0.0, 15.0))
            heading = float(rng.uniform(-np.pi, np.pi))
            ego_pos = rng.uniform(-50.0, 50.0, size=2)
            p_e = rng.uniform(-30.0, 30.0, size=2)
            v_e = rng.uniform(-15.0, 15.0, size=2)
            kind = "pedestrian" if rng.random() < 0.5 else "vehicle"
            radius = 0.4 if kind == "pedestrian" else 1.0
            c, s = np.cos(heading), np.sin(heading)
            rot = np.array([[c, -s], [s, c]])
            obs = make_obs(
                [
                    AgentObs(
                        id="a",
                        position=ego_pos + rot @ p_e,
                        velocity=rot @ v_e,
                        heading=0.0,
                        radius=radius,
                        kind=kind,
                    )
                ],
                ego_speed=ego_speed,
                ego_pos=tuple(ego_pos),
                heading=heading,
            )
            got = any(
                "ttc_collision" in cr.reasons for cr in select_critical(obs) if cr.id == "a"
            )
            want = sweep_flags_collision(p_e, v_e - np.array([ego_speed, 0.0]), 1.0 + radius)
            mismatches += got != want
        assert mismatches == 0

    def test_min_clearance_closed_form(self):
        # p=(10,0), v=(-5,0): vertex at t=2, clearance -2 with radius sum 2.
        t_star, clear = min_clearance(np.array([10.0, 0.0]), np.array([-5.0, 0.0]), 2.0)
        assert t_star == pytest.approx(2.0)
        assert clear == pytest.approx(-2.0)


class TestPrompts:
    def _frame_inputs(self, criticals=True):
        agents = [agent("lead", 12.0, 0.0, vx=3.0)] if criticals else []
        obs = make_obs(agents, ego_speed=8.0)
        crit = select_critical(obs)
        action = (SpeedDecision.DECELERATE, NavigationCommand.LANE_FOLLOW)
        return obs, crit, action

    def test_literal_fragments_present(self):
        obs, crit, action = self._frame_inputs()
        p1, p2, p3 = build_prompts(obs, crit, obs.ego, action)
        assert p1.startswith("Suppose you are driving, generate a description")
        assert "otherwise, give 'unknown.'" in p1
        assert "**center of the bottom edge of the picture**" in p2
        assert "{objects_desc}" not in p2 and "vehicle at <12.00, 0.00>" in p2
        assert "The next SPEED decision is decelerate" in p3
        assert "the next COMMAND decision is lane follow" in p3
        assert "{ego_vel}" not in p3 and "Your current speed is 8.0 m/s" in p3
        assert '"action": "decelerate and lane follow"' in p3

    def test_no_criticals_omits_prompt2(self):
        obs, crit, action = self._frame_inputs(criticals=False)
        p1, p2, p3 = build_prompts(obs, crit, obs.ego, action)
        assert p2 is None
        assert FORMAT_NO_CRITICALS in p3


class FlakyClient:
    """Fails `n_failures` times, then answers like the mock."""

    def __init__(self, n_failures):
        self.n_failures = n_failures
        self.calls = 0

    def describe(self, prompts, frame_meta):
        self.calls += 1
        if self.calls <= self.n_failures:
            raise DescribeError("boom")
        return MockDescriber().describe(prompts, frame_meta)


def minimal_meta(ref="s/000"):
    return {
        "frame_ref": ref,
        "light": "red",
        "ego_speed": 6.0,
        "speed_decision": "decelerate",
        "path_decision": "lane follow",
        "criticals": [],
    }


class TestDescribe:
    def test_success_after_two_retries(self):
        client = FlakyClient(2)
        out = describe((None, None, "p"), minimal_meta(), client, backoff_base=0.0)
        assert client.calls == 3
        assert out.action == "decelerate and lane follow"

    def test_fallback_to_mock_after_exhaustion(self, caplog):
        client = FlakyClient(99)
        with caplog.at_level(logging.WARNING):
            out = describe((None, None, "p"), minimal_meta(), client, backoff_base=0.0)
        assert client.calls == 4  # initial try + 3 retries
        assert "fallback" in caplog.text
        assert "red light" in out.description

    def test_no_fallback_raises(self):
        with pytest.raises(DescribeError):
            describe(
                (None, None, "p"), minimal_meta(), FlakyClient(99),
                backoff_base=0.0, fallback=None,
            )

    def test_backoff_is_bounded(self):
        delays = []
        describe(
            (None, None, "p"), minimal_meta(), FlakyClient(99),
            retries=6, backoff_base=1.0, backoff_cap=4.0, sleep=delays.append,
        )
        assert delays == [1.0, 2.0, 4.0, 4.0, 4.0, 4.0]

    def test_parse_description_schema(self):
        ok = parse_description({"description": "d", "critical_objects": ["a"], "action": "x"})
        assert ok.critical_objects == ("a",)
        single = parse_description({"description": "d", "critical_objects": "a", "action": "x"})
        assert single.critical_objects == ("a",)
        with pytest.raises(DescribeError):
            parse_description({"description": "d", "action": "x"})
        with pytest.raises(DescribeError):
            parse_description([1, 2])

    def test_mock_deterministic(self):
        meta = minimal_meta()
        meta["criticals"] = [
            {"id": "a", "kind": "vehicle", "x": 12.3, "y": -0.2, "vy": 0.0,
             "speed": 4.1, "slower": True, "reasons": ["lead_vehicle"]}
        ]
        a = MockDescriber().describe((None, None, None), meta)
        b = MockDescriber().describe((None, None, None), meta)
        assert a == b
        assert "a slower lead vehicle ahead" in a.description
        assert a.critical_objects[0].startswith("vehicle 12.5 m ahead")


def summary(light="none", ids=(), kinds=(), speed=5.0, action="keep and lane follow"):
    return FrameSummary(
        light=light,
        critical_ids=tuple(ids),
        critical_kinds=tuple(kinds),
        positions=tuple((0.0, 0.0) for _ in ids),
        ego_speed=speed,
        ego_action=action,
    )


class TestHistory:
    def test_depth_eviction(self):
        q = HistoryQueue(depth=5)
        for k in range(6):
            update_history(q, summary(speed=float(k)))
        assert len(q) == 5
        assert q.records()[0].ego_speed == 1.0

    def test_empty_queue_answer(self):
        assert history_answer(0, summary(), HistoryQueue()) == "no prior information available."

    def test_red_to_green_transition_mentioned(self):
        q = HistoryQueue()
        update_history(q, summary(light="red"))
        for tid in range(12):
            ans = history_answer(tid, summary(light="green"), q)
            assert "the light changed from red to green." in ans

    def test_object_delta_answer(self):
        q = HistoryQueue()
        update_history(q, summary(ids=("a",), kinds=("vehicle",)))
        ans = history_answer(0, summary(ids=("a", "p"), kinds=("vehicle", "pedestrian")), q)
        assert ans == "new critical objects: pedestrian."
        same = history_answer(2, summary(ids=("a",), kinds=("vehicle",)), q)
        assert same == "the critical objects are unchanged."
        gone = history_answer(4, summary(), q)
        assert gone == "cleared critical objects: vehicle."

    def test_light_influence_answer(self):
        q = HistoryQueue()
        update_history(q, summary(light="red"))
        ans = history_answer(5, summary(light="red"), q)
        assert ans == "yes, a red light affected the driving strategy."
        q2 = HistoryQueue()
        update_history(q2, summary())
        assert history_answer(7, summary(), q2).startswith("no, no traffic light")

    def test_speed_and_behavior_answers(self):
        q = HistoryQueue()
        update_history(q, summary(speed=4.0, action="decelerate and lane follow"))
        assert history_answer(10, summary(speed=6.0), q) == "the speed increased from 4.0 to 6.0 m/s."
        assert history_answer(10, summary(speed=2.0), q) == "the speed decreased from 4.0 to 2.0 m/s."
        assert history_answer(10, summary(speed=4.1), q) == "the speed stayed near 4.0 m/s."
        assert (
            history_answer(11, summary(), q)
            == "the previous behavior was decelerate and lane follow."
        )


class TestEmitVQA:
    def _described(self, with_criticals):
        objs = ("vehicle 10.0 m ahead, speed 4.0 m/s, flagged lead vehicle",) if with_criticals else ()
        return Description("clear road ahead; ego speed 5.0 m/s.", objs, "keep and lane follow")

    def test_no_criticals_no_type2(self):
        pairs = emit_vqa("s/000", self._described(False), summary(), HistoryQueue(), seed=0)
        assert sorted(p.type for p in pairs) == ["action_reasoning", "history", "scene_description"]

    def test_questions_are_verbatim_templates(self):
        pairs = emit_vqa("s/001", self._described(True), summary(), HistoryQueue(), seed=3)
        assert len(pairs) == 4
        for p in pairs:
            assert p.question in ALL_TEMPLATES
            assert QUESTION_TEMPLATES[p.type][p.template_id] == p.question

    def test_deterministic(self):
        a = emit_vqa("s/002", self._described(True), summary(), HistoryQueue(), seed=7)
        b = emit_vqa("s/002", self._described(True), summary(), HistoryQueue(), seed=7)
        assert a == b


def fixture_clips():
    """Three held-out-family episodes truncated to exactly 50 frames."""
    clips = []
    total = 0
    for family, seed in (("red_light", 3), ("pedestrian_cross", 5), ("lead_brake", 11)):
        sc = make_scenario(family, seed)
        rec = run_episode(sc, record=True)
        frames = extract_frames(rec)
        take = min(len(frames), 50 - total)
        clips.append(Clip(sc.id, family, seed, frames[:take]))
        total += take
        if total == 50:
            break
    assert total == 50
    return clips


class TestPipeline:
    def test_bit_identical_reruns(self):
        clips = fixture_clips()
        a = vqa_jsonl_lines(annotate_clips(clips, seed=1234).pairs)
        b = vqa_jsonl_lines(annotate_clips(clips, seed=1234).pairs)
        assert a == b

    def test_matches_committed_golden_file(self):
        result = annotate_clips(fixture_clips(), seed=1234)
        got = "\n".join(vqa_jsonl_lines(result.pairs)) + "\n"
        assert GOLDEN_PATH.exists(), "golden fixture missing; regenerate via scripts in README"
        assert got == GOLDEN_PATH.read_text()

    def test_golden_corpus_properties(self):
        pairs = load_vqa_jsonl(GOLDEN_PATH)
        assert all(p.question in ALL_TEMPLATES for p in pairs)
        assert all(QUESTION_TEMPLATES[p.type][p.template_id] == p.question for p in pairs)
        # the red-light fixture sees the light flip; history answers must say so
        assert any("the light changed from red to green." in p.answer for p in pairs)
        refs = {p.frame_ref for p in pairs}
        assert len(refs) == 50

    def test_manifest_counts(self):
        result = annotate_clips(fixture_clips(), seed=1234)
        m = result.manifest
        assert m["frames"] == 50 and m["skipped"] == 0
        assert m["pairs"] == sum(m["counts"].values()) == len(result.pairs)
        assert "ego-frame meters" in m["coordinate_note"]

    def test_remote_skip_path(self):
        class FailOnce:
            def describe(self, prompts, frame_meta):
                if frame_meta["frame_ref"].endswith("/001"):
                    raise DescribeError("down")
                return MockDescriber().describe(prompts, frame_meta)

        clips = fixture_clips()[:1]
        result = annotate_clips(
            clips, FailOnce(), seed=0, allow_fallback=False, backoff_base=0.0
        )
        assert result.manifest["skipped"] == 1
        refs = {p.frame_ref for p in result.pairs}
        assert not any(r.endswith("/001") for r in refs)

    def test_remote_fallback_keeps_frames(self):
        class AlwaysDown:
            def describe(self, prompts, frame_meta):
                raise DescribeError("down")

        clips = fixture_clips()[:1]
        result = annotate_clips(clips, AlwaysDown(), seed=0, backoff_base=0.0)
        assert result.manifest["skipped"] == 0
        assert result.manifest["frames"] == len(clips[0].frames)
