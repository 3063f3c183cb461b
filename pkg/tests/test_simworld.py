"""Simulation-world tests: kinematic oracles, determinism, scoring, extraction."""

import math

import numpy as np
import pytest

from deskdrive.core import (
    ContractViolation,
    NavigationCommand,
    SpeedDecision,
    Trajectory,
)
from deskdrive.simworld import (
    DT_SIM,
    FAMILIES,
    HELD_OUT_FAMILIES,
    PLAN_DT,
    REPLAN_STEPS,
    EpisodeRecord,
    ExpertPolicy,
    LightState,
    Scenario,
    SceneObservation,
    ScriptEvent,
    StateSnap,
    World,
    extract_frames,
    make_dataset,
    make_scenario,
    replay_lines,
    run_episode,
    scenario_suite,
    score_episode,
    speed_decision_label,
)
from deskdrive.simworld.runner import EpisodeResult


class KeepSpeedPolicy:
    """Drives straight at a fixed speed, ignoring everything."""

    def __init__(self, speed: float):
        self.speed = speed

    def plan(self, obs: SceneObservation) -> Trajectory:
        step = self.speed * PLAN_DT
        wp = np.array([[step * (k + 1), 0.0] for k in range(4)])
        return Trajectory(wp, dt=PLAN_DT)


def lead_brake_script_scenario() -> Scenario:
    """Hand-built script: lead 20 m ahead at 8 m/s brakes at 6 m/s^2 from t=2 s."""
    return Scenario(
        id="oracle_lead_brake",
        family="lead_brake",
        route_length=200.0,
        seed=0,
        script=[ScriptEvent(time=2.0, target="lead", attr="ax", value=-6.0)],
        agents=[{"id": "lead", "kind": "vehicle", "x": 20.0, "y": 0.0, "vx": 8.0}],
        ego_speed=8.0,
        timeout=30.0,
    )


def integrate_lead_brake_1d(dt: float = DT_SIM):
    """Independent 1-D Euler integration of the lead-brake script.

    Mirrors the world's update order: accel event applies from the step whose
    start time reaches the event time; positions advance with the pre-update
    velocity; overlap when center distance < 2.0 (two radius-1 circles).
    """
    ego_x, ego_v = 0.0, 8.0
    lead_x, lead_v = 20.0, 8.0
    t = 0.0
    for _ in range(10_000):
        ax = -6.0 if t >= 2.0 - 1e-9 else 0.0
        lead_x += lead_v * dt
        lead_v = max(0.0, lead_v + ax * dt)
        ego_x += ego_v * dt
        t += dt
        if lead_x - ego_x < 2.0:
            return t
    raise AssertionError("no collision in oracle")


class TestLeadBrakeOracle:
    def test_closed_form_matches_numeric_oracle(self):
        # lead stops at 20 + 16 + 8^2/(2*6) = 41.333; ego hits 39.333 at t=4.917
        t_closed = (20.0 + 16.0 + 8.0**2 / 12.0 - 2.0) / 8.0
        t_oracle = integrate_lead_brake_1d()
        assert abs(t_oracle - t_closed) <= 2 * DT_SIM

    def test_world_collides_before_six_seconds(self):
        sc = lead_brake_script_scenario()
        res = run_episode(sc, policy=KeepSpeedPolicy(8.0))
        assert "collision_vehicle" in res.infractions
        assert res.duration < 6.0
        assert not res.success

    def test_world_collision_time_matches_oracle(self):
        t_oracle = integrate_lead_brake_1d()
        res = run_episode(lead_brake_script_scenario(), policy=KeepSpeedPolicy(8.0))
        assert abs(res.duration - t_oracle) <= 2 * DT_SIM

    def test_expert_avoids_the_same_script(self):
        # the scripted lead parks on the lane, so the route cannot complete;
        # the expert must stop behind it without any collision
        res = run_episode(lead_brake_script_scenario())
        assert not any(i.startswith("collision") for i in res.infractions), res.infractions


class TestWorldBasics:
    def test_stationary_ego_no_infractions(self):
        sc = Scenario(
            id="still", family="lead_brake", route_length=50.0, seed=0,
            script=[], agents=[], ego_speed=0.0, timeout=2.0,
            initial_light="green",
        )
        world = World(sc)
        while not world.terminated:
            world.step(Trajectory(np.zeros((4, 2))))
        assert world.progress == 0.0
        assert world.infractions == ["route_timeout"]

    def test_overlap_is_collision(self):
        # circles r=1 at distance 1.5 overlap
        sc = Scenario(
            id="bump", family="lead_brake", route_length=50.0, seed=0,
            script=[],
            agents=[{"id": "a", "kind": "vehicle", "x": 1.5, "y": 0.0, "vx": 0.0}],
            ego_speed=0.0, timeout=5.0,
        )
        world = World(sc)
        world.step(Trajectory(np.zeros((4, 2))))
        assert "collision_vehicle" in world.infractions
        assert world.terminated

    def test_static_obstacle_collision_kind(self):
        sc = Scenario(
            id="cone", family="lead_brake", route_length=50.0, seed=0,
            script=[],
            agents=[{"id": "cone", "kind": "static", "x": 1.5, "y": 0.0, "vx": 0.0}],
            ego_speed=0.0, timeout=5.0,
        )
        world = World(sc)
        world.step(Trajectory(np.zeros((4, 2))))
        assert "collision_static" in world.infractions

    def test_collision_symmetric_in_ordering(self):
        def infractions_with_agent_at(x):
            sc = Scenario(
                id="sym", family="lead_brake", route_length=50.0, seed=0,
                script=[],
                agents=[{"id": "a", "kind": "vehicle", "x": x, "y": 0.0, "vx": 0.0}],
                ego_speed=0.0, timeout=1.0,
            )
            world = World(sc)
            world.step(Trajectory(np.zeros((4, 2))))
            return world.infractions

        ahead = infractions_with_agent_at(1.5)
        behind = infractions_with_agent_at(-1.5)
        assert ahead == behind != []

    def test_step_after_termination_raises(self):
        sc = make_scenario("lead_brake", 0)
        res = run_episode(sc, record=True)
        assert isinstance(res, EpisodeRecord)
        world = World(sc)
        while not world.terminated:
            world.step(Trajectory(np.full((4, 2), 0.0)))
        with pytest.raises(ContractViolation):
            world.step()

    def test_off_road_terminates(self):
        sc = Scenario(
            id="veer", family="lead_brake", route_length=500.0, seed=0,
            script=[], agents=[], ego_speed=8.0, timeout=30.0,
        )
        hard_left = Trajectory(np.array([[2.0, 2.0], [4.0, 4.0], [6.0, 6.0], [8.0, 8.0]]))

        class Veer:
            def plan(self, obs):
                return hard_left

        res = run_episode(sc, policy=Veer())
        assert "off_road" in res.infractions
        assert not res.success
        assert res.route_completion < 1.0

    def test_red_light_is_non_terminal(self):
        sc = Scenario(
            id="run_red", family="red_light", route_length=60.0, seed=0,
            script=[],
            agents=[], ego_speed=8.0, initial_light="red", stop_line=20.0,
            timeout=30.0,
        )
        res = run_episode(sc, policy=KeepSpeedPolicy(8.0))
        assert res.infractions == ["red_light"]
        assert res.success  # default: red light does not void success
        res_strict = run_episode(
            sc, policy=KeepSpeedPolicy(8.0), success_allows_red_light=False
        )
        assert not res_strict.success

    def test_noise_seed_formula(self):
        sc = make_scenario("lead_brake", 7)
        world = World(sc)
        world.step(Trajectory(np.zeros((4, 2))))
        world.step()
        obs = world.observe()
        assert obs.noise_seed == (7 * 1_000_003 + 2) % (2**31 - 1)

    def test_progress_monotone(self):
        rec = run_episode(make_scenario("overtake", 2), record=True)
        progresses = [s.progress for s in rec.states]
        assert all(b >= a for a, b in zip(progresses, progresses[1:]))

    def test_ego_history_spacing(self):
        sc = make_scenario("lead_brake", 0)
        world = World(sc)
        policy = ExpertPolicy(sc)
        for _ in range(25):
            if world.step_count % REPLAN_STEPS == 0:
                world.step(policy.plan(world.observe()))
            else:
                world.step()
        status = world.ego_status()
        assert status.history_positions.shape == (4, 2)
        # newest history sample is the pose 0.5 s ago, not the current pose
        assert status.history_positions[-1][0] < status.position[0]


class TestScenarios:
    def test_all_families_build(self):
        for family in FAMILIES:
            sc = make_scenario(family, 0)
            assert sc.family == family
            assert sc.route_length > 0

    def test_unknown_family_raises(self):
        with pytest.raises(ValueError):
            make_scenario("roundabout", 0)

    def test_suite_ids_unique(self):
        suite = scenario_suite(list(FAMILIES), list(range(4)))
        ids = [sc.id for sc in suite]
        assert len(set(ids)) == len(ids) == 24

    def test_seeds_vary_parameters(self):
        a = make_scenario("lead_brake", 0)
        b = make_scenario("lead_brake", 1)
        assert a.agents[0]["x"] != b.agents[0]["x"] or a.ego_speed != b.ego_speed

    def test_held_out_families_subset(self):
        assert set(HELD_OUT_FAMILIES) <= set(FAMILIES)


class TestExpertRegression:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_expert_succeeds_on_shipped_scripts(self, family):
        for seed in range(8):
            res = run_episode(make_scenario(family, seed))
            assert res.success, (family, seed, res.infractions, res.route_completion)

    def test_success_implies_full_completion(self):
        res = run_episode(make_scenario("merge", 5))
        assert res.success and res.route_completion == 1.0


class TestDeterminism:
    def test_bit_identical_replay(self):
        a = run_episode(make_scenario("give_way", 11), record=True)
        b = run_episode(make_scenario("give_way", 11), record=True)
        assert replay_lines(a) == replay_lines(b)

    def test_bit_identical_result_fields(self):
        a = run_episode(make_scenario("pedestrian_cross", 3))
        b = run_episode(make_scenario("pedestrian_cross", 3))
        assert a.duration == b.duration
        assert a.infractions == b.infractions
        assert np.array_equal(a.speeds, b.speeds)

    def test_replay_schema_header(self):
        rec = run_episode(make_scenario("red_light", 1), record=True)
        lines = replay_lines(rec)
        assert '"schema":"simworld/1"' in lines[0]
        assert len(lines) == 1 + len(rec.states)


def _mk_result(completion, infractions, speeds=None, ref=8.0):
    speeds = np.array([8.0, 8.0]) if speeds is None else np.asarray(speeds, float)
    return EpisodeResult(
        scenario_id="s", family="lead_brake", seed=0,
        success=completion >= 1.0 and not infractions,
        route_completion=completion, infractions=list(infractions),
        duration=len(speeds) * DT_SIM, reference_speed=ref,
        speeds=speeds, accels=np.diff(speeds) / DT_SIM,
    )


class TestScoring:
    def test_clean_full_route(self):
        s = score_episode(_mk_result(1.0, []))
        assert s.driving_score == 100.0
        assert s.success

    def test_vehicle_collision_penalty(self):
        # 100 * 0.8 * 0.6 = 48.0
        s = score_episode(_mk_result(0.8, ["collision_vehicle"]))
        assert s.driving_score == pytest.approx(48.0)

    def test_red_light_penalty(self):
        # 100 * 1.0 * 0.7 = 70.0
        s = score_episode(_mk_result(1.0, ["red_light"]))
        assert s.driving_score == pytest.approx(70.0)

    def test_pedestrian_penalty(self):
        s = score_episode(_mk_result(1.0, ["collision_pedestrian"]))
        assert s.driving_score == pytest.approx(50.0)

    def test_penalties_multiply(self):
        s = score_episode(_mk_result(1.0, ["red_light", "collision_vehicle"]))
        assert s.driving_score == pytest.approx(42.0)

    def test_efficiency_capped(self):
        s = score_episode(_mk_result(1.0, [], speeds=[16.0, 16.0], ref=8.0))
        assert s.efficiency == 100.0
        s2 = score_episode(_mk_result(1.0, [], speeds=[4.0, 4.0], ref=8.0))
        assert s2.efficiency == pytest.approx(50.0)

    def test_comfort_flags_harsh_braking(self):
        # 8 -> 0 in one step is an 80 m/s^2 spike
        s = score_episode(_mk_result(1.0, [], speeds=[8.0, 8.0, 0.0, 0.0]))
        assert s.comfortness < 100.0


def _obs_at_origin(speed=4.0, heading=0.0):
    from deskdrive.core import EgoStatus

    return SceneObservation(
        timestamp=0.0,
        ego=EgoStatus(
            speed=speed, heading=heading, position=np.zeros(2),
            history_positions=np.zeros((4, 2)),
        ),
        agents=[], light=LightState.NONE, light_position=None,
        route_progress=0.0, noise_seed=0,
    )


def _record_from_track(xs, ys, speeds, agents_per_step=None, heading=0.0):
    states = []
    for j, (x, y, v) in enumerate(zip(xs, ys, speeds)):
        states.append(
            StateSnap(
                t=j * DT_SIM, ego_x=x, ego_y=y, ego_heading=heading, ego_speed=v,
                agents=agents_per_step[j] if agents_per_step else [],
                light=LightState.NONE, progress=0.0,
                command=NavigationCommand.LANE_FOLLOW,
            )
        )
    rec = EpisodeRecord(result=None)
    rec.states = states
    rec.observations = {0: _obs_at_origin(speed=speeds[0], heading=heading)}
    return rec


class TestExtraction:
    def test_constant_speed_waypoints(self):
        # 4 m/s straight: waypoints land at 2, 4, 6, 8 m
        ts = [j * DT_SIM for j in range(21)]
        xs = [4.0 * t for t in ts]
        rec = _record_from_track(xs, [0.0] * 21, [4.0] * 21)
        frames = extract_frames(rec)
        assert len(frames) == 1
        np.testing.assert_allclose(
            frames[0].gt_traj.waypoints,
            [[2.0, 0.0], [4.0, 0.0], [6.0, 0.0], [8.0, 0.0]],
            atol=1e-9,
        )
        assert frames[0].speed_decision == SpeedDecision.KEEP

    def test_decelerating_first_waypoint(self):
        # braking 2 m/s^2 from 4 m/s: x(0.5) = 4*0.5 - 0.5*2*0.25 = 1.75
        ts = [j * DT_SIM for j in range(21)]
        xs = [4.0 * t - t * t if t <= 2.0 else 4.0 for t in ts]
        vs = [max(0.0, 4.0 - 2.0 * t) for t in ts]
        rec = _record_from_track(xs, [0.0] * 21, vs)
        frames = extract_frames(rec)
        assert frames[0].gt_traj.waypoints[0][0] == pytest.approx(1.75, abs=1e-9)
        assert frames[0].speed_decision == SpeedDecision.DECELERATE

    def test_stationary_zero_waypoints_keep(self):
        rec = _record_from_track([0.0] * 21, [0.0] * 21, [0.0] * 21)
        frames = extract_frames(rec)
        np.testing.assert_array_equal(frames[0].gt_traj.waypoints, np.zeros((4, 2)))
        assert frames[0].speed_decision == SpeedDecision.KEEP

    def test_heading_rotates_into_ego_frame(self):
        # ego facing +y, future points up the y axis -> forward in ego frame
        ts = [j * DT_SIM for j in range(21)]
        ys = [4.0 * t for t in ts]
        rec = _record_from_track([0.0] * 21, ys, [4.0] * 21, heading=math.pi / 2)
        frames = extract_frames(rec)
        np.testing.assert_allclose(
            frames[0].gt_traj.waypoints,
            [[2.0, 0.0], [4.0, 0.0], [6.0, 0.0], [8.0, 0.0]],
            atol=1e-9,
        )

    def test_agent_future_constant_velocity(self):
        agents = [
            [("a", 10.0 + 1.0 * j * DT_SIM, 2.2, 1.0, 0.0, "vehicle", 1.0)]
            for j in range(21)
        ]
        rec = _record_from_track(
            [0.0] * 21, [0.0] * 21, [0.0] * 21, agents_per_step=agents
        )
        frames = extract_frames(rec)
        aid, fut, radius = frames[0].agent_futures[0]
        assert aid == "a" and radius == 1.0
        np.testing.assert_allclose(
            fut, [[10.5, 2.2], [11.0, 2.2], [11.5, 2.2], [12.0, 2.2]], atol=1e-9
        )

    def test_short_episode_yields_no_frames(self):
        rec = _record_from_track([0.0] * 10, [0.0] * 10, [0.0] * 10)
        assert extract_frames(rec) == []

    def test_speed_deadband(self):
        assert speed_decision_label(0.29) == SpeedDecision.KEEP
        assert speed_decision_label(-0.29) == SpeedDecision.KEEP
        assert speed_decision_label(0.31) == SpeedDecision.ACCELERATE
        assert speed_decision_label(-0.31) == SpeedDecision.DECELERATE


class TestMakeDataset:
    def test_dataset_from_suite(self):
        clips = make_dataset(scenario_suite(["lead_brake", "merge"], [0, 1]))
        assert len(clips) == 4
        for clip in clips:
            assert len(clip.frames) >= 4
            for f in clip.frames:
                assert f.gt_traj.waypoints.shape == (4, 2)
                assert f.command in NavigationCommand
                assert np.isfinite(f.gt_traj.waypoints).all()

    def test_impossible_scenario_rejected(self):
        # blocker parked on the stop line of a red light that never turns green
        sc = Scenario(
            id="walled", family="red_light", route_length=40.0, seed=0,
            script=[],
            agents=[{"id": "wall", "kind": "vehicle", "x": 20.0, "y": 0.0, "vx": 0.0}],
            ego_speed=8.0, timeout=8.0,
        )
        with pytest.raises(ContractViolation):
            make_dataset([sc])
        assert make_dataset([sc], strict=False) == []
