"""QT-Former tests: FIFO law, attention flow, matching, gradients."""

import itertools

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from deskdrive.core import ContractViolation, EgoStatus, check_gradients
from deskdrive.qtformer import (
    GRID_NX,
    GRID_NY,
    N_CHANNELS,
    FeatureTokens,
    GridEncoder,
    MemoryBank,
    PerceptionTarget,
    QTFormer,
    QTFormerConfig,
    match_and_supervise,
    match_queries,
    perception_target_from_frame,
    rasterize,
    reset_memory,
)
from deskdrive.simworld import (
    AgentObs,
    LightState,
    SceneObservation,
    make_scenario,
    run_episode,
    extract_frames,
)

torch.manual_seed(0)


def _obs(agents=(), light=LightState.NONE, light_x=None, speed=0.0, seed=0):
    return SceneObservation(
        timestamp=0.0,
        ego=EgoStatus(
            speed=speed, heading=0.0, position=np.zeros(2),
            history_positions=np.zeros((4, 2)),
        ),
        agents=list(agents),
        light=light,
        light_position=None if light_x is None else np.array([light_x, 0.0]),
        route_progress=0.0,
        noise_seed=seed,
    )


def _agent(aid, x, y, vx=0.0, vy=0.0, kind="vehicle"):
    return AgentObs(
        id=aid, position=np.array([x, y]), velocity=np.array([vx, vy]),
        heading=0.0, radius=1.0 if kind == "vehicle" else 0.4, kind=kind,
    )


class TestMemoryBank:
    @given(
        m=st.integers(min_value=0, max_value=40),
        n=st.integers(min_value=1, max_value=20),
    )
    @settings(max_examples=1000, deadline=None)
    def test_fifo_law(self, m, n):
        bank = MemoryBank(capacity=n)
        for t in range(m):
            bank.push(torch.zeros(1, 2, 4), t)
        expect = list(range(m))[-min(m, n):]
        assert bank.times == expect

    def test_pinned_capacity_16(self):
        # pushing frames 0..17 with capacity 16 leaves exactly frames 2..17
        bank = MemoryBank(capacity=16)
        for t in range(18):
            bank.push(torch.zeros(1, 2, 4), t)
        assert bank.times == list(range(2, 18))

    def test_non_monotone_push_rejected(self):
        bank = MemoryBank(capacity=4)
        bank.push(torch.zeros(1, 2, 4), 5)
        with pytest.raises(ContractViolation):
            bank.push(torch.zeros(1, 2, 4), 5)
        with pytest.raises(ContractViolation):
            bank.push(torch.zeros(1, 2, 4), 3)

    def test_reset_idempotent(self):
        bank = MemoryBank(capacity=4)
        bank.push(torch.zeros(1, 2, 4), 0)
        assert len(reset_memory(bank)) == 0
        assert len(reset_memory(bank)) == 0

    def test_pushed_slots_are_detached(self):
        bank = MemoryBank(capacity=4)
        x = torch.zeros(1, 2, 4, requires_grad=True)
        bank.push(x * 2.0, 0)
        assert not bank.slots[0][0].requires_grad

    def test_stacked_ages(self):
        bank = MemoryBank(capacity=3)
        for t in (0, 1, 2):
            bank.push(torch.zeros(1, 2, 4), t)
        _, ages = bank.stacked(frame_time=3)
        # oldest slot (t=0) has age 3, newest (t=2) age 1, two rows per slot
        assert ages.tolist() == [3, 3, 2, 2, 1, 1]


class TestEncoder:
    def test_empty_scene_bias_only(self):
        enc = GridEncoder(c_f=16)
        feats = enc([_obs()])
        expect = enc.embed.bias.detach()
        assert torch.allclose(feats.tokens[0], expect.expand_as(feats.tokens[0]))

    def test_single_agent_locality(self):
        enc = GridEncoder(c_f=16)
        empty = enc([_obs()]).tokens[0]
        one = enc([_obs(agents=[_agent("a", 10.0, 0.0, vx=3.0)])]).tokens[0]
        differing = (~torch.isclose(one, empty)).any(dim=-1).nonzero().flatten()
        assert len(differing) == 1  # agent covers exactly one patch

    def test_shape_contract(self):
        enc = GridEncoder(c_f=32)
        obs = _obs(
            agents=[_agent("a", 5, 0), _agent("b", 12, 2.2), _agent("p", 9, 4, kind="pedestrian")],
            light=LightState.RED, light_x=20.0, speed=7.0,
        )
        feats = enc([obs, obs])
        assert feats.tokens.shape == (2, enc.n_tokens, 32)
        assert feats.pos.shape == (enc.n_tokens, 32)

    def test_raster_channels(self):
        obs = _obs(
            agents=[_agent("a", 10.0, 0.0, vx=6.0)],
            light=LightState.RED, light_x=20.0, speed=7.5,
        )
        grid = rasterize(obs)
        assert grid.shape == (N_CHANNELS, GRID_NY, GRID_NX)
        assert grid[0].sum() == 1.0  # one vehicle cell
        assert grid[5].sum() == GRID_NY  # red column
        assert grid[6].sum() == 0.0
        assert np.allclose(grid[8], 0.5)  # 7.5 / 15

    def test_velocity_noise_deterministic(self):
        obs = _obs(agents=[_agent("a", 10.0, 0.0, vx=6.0)], seed=99)
        g1 = rasterize(obs, vel_noise_std=0.5)
        g2 = rasterize(obs, vel_noise_std=0.5)
        assert np.array_equal(g1, g2)
        assert not np.array_equal(g1, rasterize(obs, vel_noise_std=0.0))

    def test_out_of_grid_agent_ignored(self):
        enc = GridEncoder(c_f=16)
        far = _obs(agents=[_agent("a", 500.0, 0.0)])
        assert torch.allclose(enc([far]).tokens, enc([_obs()]).tokens)


def _run_frames(model, enc, observations, memory=None):
    memory = model.new_memory() if memory is None else memory
    out = None
    for t, obs in enumerate(observations):
        out = model(enc([obs]), memory, frame_time=t)
        memory = out.memory
    return out


class TestQTFormerForward:
    def setup_method(self):
        torch.manual_seed(7)
        self.cfg = QTFormerConfig()
        self.model = QTFormer(self.cfg).eval()
        self.enc = GridEncoder(c_f=self.cfg.c_q)

    def test_shapes_and_memory_growth(self):
        mem = self.model.new_memory()
        out = self.model(self.enc([_obs()]), mem, 0)
        assert out.scene_tokens.shape == (1, self.cfg.n_scene, self.cfg.c_out)
        assert out.history_tokens.shape == (1, self.cfg.n_history, self.cfg.c_out)
        assert len(out.memory) == 1
        out = self.model(self.enc([_obs()]), out.memory, 1)
        assert len(out.memory) == 2

    def test_non_monotone_frame_time_rejected(self):
        mem = self.model.new_memory()
        self.model(self.enc([_obs()]), mem, 5)
        with pytest.raises(ContractViolation):
            self.model(self.enc([_obs()]), mem, 5)

    def test_zeroed_projection_bias_rows(self):
        torch.manual_seed(3)
        model = QTFormer(self.cfg)
        with torch.no_grad():
            model.proj_scene[-1].weight.zero_()
            model.proj_scene[-1].bias.copy_(torch.arange(self.cfg.c_out).float())
            model.proj_history[-1].weight.zero_()
            model.proj_history[-1].bias.fill_(-2.0)
        out = model(self.enc([_obs()]), model.new_memory(), 0)
        expect_s = torch.arange(self.cfg.c_out).float()
        assert torch.allclose(out.scene_tokens[0, 0], expect_s)
        assert torch.allclose(out.scene_tokens[0], expect_s.expand(self.cfg.n_scene, -1))
        assert torch.allclose(out.history_tokens, torch.full_like(out.history_tokens, -2.0))

    def test_permutation_equivariance_of_image_attention(self):
        model = QTFormer(self.cfg).double().eval()
        torch.manual_seed(11)
        tokens = torch.randn(1, 64, self.cfg.c_q, dtype=torch.float64)
        pos = torch.randn(64, self.cfg.c_q, dtype=torch.float64)
        perm = torch.randperm(64)
        with torch.no_grad():
            a = model(FeatureTokens(tokens, pos), model.new_memory(), 0)
            b = model(
                FeatureTokens(tokens[:, perm], pos[perm]), model.new_memory(), 0
            )
        assert torch.allclose(a.scene_tokens, b.scene_tokens, atol=1e-10)
        assert torch.allclose(a.history_tokens, b.history_tokens, atol=1e-10)

    def test_history_disabled_bypasses_memory(self):
        cfg = QTFormerConfig(n_history=0)
        model = QTFormer(cfg)
        mem = model.new_memory()
        out = model(self.enc([_obs()]), mem, 0)
        assert out.history_tokens.shape == (1, 0, cfg.c_out)
        assert len(out.memory) == 0  # push bypassed too

    def test_memory_changes_history_tokens(self):
        # same current frame, different pasts -> different x_h
        obs_now = _obs(speed=5.0)
        past_a = [_obs(agents=[_agent("a", 12, 0, vx=2.0)], speed=5.0)]
        past_b = [_obs(agents=[_agent("a", 30, 2.2, vx=0.0)], speed=5.0)]
        with torch.no_grad():
            out_a = _run_frames(self.model, self.enc, past_a + [obs_now])
            out_b = _run_frames(self.model, self.enc, past_b + [obs_now])
            assert not torch.allclose(out_a.history_tokens, out_b.history_tokens)
            # scene tokens only see the current frame, so they agree
            assert torch.allclose(out_a.scene_tokens, out_b.scene_tokens)

    def test_deterministic_forward(self):
        obs = _obs(agents=[_agent("a", 8, 0, vx=4.0)], speed=6.0)
        with torch.no_grad():
            a = _run_frames(self.model, self.enc, [obs, obs, obs])
            b = _run_frames(self.model, self.enc, [obs, obs, obs])
        assert torch.equal(a.scene_tokens, b.scene_tokens)
        assert torch.equal(a.history_tokens, b.history_tokens)


class TestGradients:
    def test_gradcheck_through_memory_and_timestamp(self):
        # memory slots are detached by design, so the cross-frame path has no
        # analytic gradient: fill the bank once, freeze its content, and check
        # one forward pass that exercises the memory cross-attention
        torch.manual_seed(5)
        cfg = QTFormerConfig(
            n_scene=4, n_perception=4, n_history=2, c_q=8, c_out=8,
            n_heads=2, memory_slots=4,
        )
        model = QTFormer(cfg).double()
        tokens0 = torch.randn(1, 6, 8, dtype=torch.float64)
        tokens1 = torch.randn(1, 6, 8, dtype=torch.float64)
        pos = torch.randn(6, 8, dtype=torch.float64)
        with torch.no_grad():
            warm = model(FeatureTokens(tokens0, pos), model.new_memory(), 0).memory
        frozen_slots = list(warm.slots)

        def probe():
            mem = MemoryBank(capacity=cfg.memory_slots)
            mem.slots = list(frozen_slots)
            out = model(FeatureTokens(tokens1, pos), mem, 1)
            return out.history_tokens.pow(2).sum() + out.scene_tokens.sum()

        params = {
            "ts_embed": model.ts_embed.table.weight,
            "ca_memory_qproj": model.ca_memory.attn.in_proj_weight,
            "ca_scene_qproj": model.ca_scene.attn.in_proj_weight,
            "ca_image_qproj": model.ca_image.attn.in_proj_weight,
            "sa_qproj": model.sa_joint.attn.in_proj_weight,
            "history_queries": model.history_queries,
            "scene_queries": model.scene_queries,
        }
        worst = check_gradients(probe, params, coords_per_tensor=4, seed=1)
        assert max(worst.values()) < 1e-4, worst

    def test_timestamp_gradient_nonzero_with_memory(self):
        torch.manual_seed(5)
        cfg = QTFormerConfig(
            n_scene=4, n_perception=4, n_history=2, c_q=8, c_out=8,
            n_heads=2, memory_slots=4,
        )
        model = QTFormer(cfg).double()
        tokens = torch.randn(1, 6, 8, dtype=torch.float64)
        pos = torch.randn(6, 8, dtype=torch.float64)
        mem = model.new_memory()
        out0 = model(FeatureTokens(tokens, pos), mem, 0)
        out1 = model(FeatureTokens(tokens, pos), out0.memory, 1)
        loss = out1.history_tokens.pow(2).sum()
        loss.backward()
        assert model.ts_embed.table.weight.grad is not None
        assert model.ts_embed.table.weight.grad.abs().sum() > 0


class TestMatching:
    def _perception_like(self, class_logits, boxes):
        # minimal single-sample stand-in with plumbed-through tensors
        from deskdrive.qtformer import PerceptionOutput

        n_q = class_logits.shape[0]
        return PerceptionOutput(
            class_logits=class_logits.unsqueeze(0),
            boxes=boxes.unsqueeze(0),
            traffic_state_logits=torch.zeros(1, 4),
            motion_logits=torch.zeros(1, n_q, 3),
            motion_traj=torch.zeros(1, n_q, 3, 4, 2),
        )

    def test_matcher_prefers_near_box(self):
        # two queries with equal class logits; GT at (5, 0): the (5.1, 0)
        # prediction must win over (20, 0)
        logits = torch.zeros(2, 4)
        boxes = torch.tensor([[5.1, 0, 2, 4, 0], [20.0, 0, 2, 4, 0]]).float()
        tgt = PerceptionTarget(
            boxes=torch.tensor([[5.0, 0, 2, 4, 0]], dtype=torch.float64),
            classes=torch.tensor([0]),
            light_index=0,
            futures=torch.zeros(1, 4, 2, dtype=torch.float64),
            future_mask=torch.tensor([False]),
        )
        q_idx, g_idx = match_queries(logits, boxes, tgt)
        assert list(q_idx) == [0] and list(g_idx) == [0]

    def test_matcher_agrees_with_brute_force(self):
        torch.manual_seed(13)
        n_q, g = 6, 3
        logits = torch.randn(n_q, 4)
        boxes = torch.randn(n_q, 5)
        tgt = PerceptionTarget(
            boxes=torch.randn(g, 5, dtype=torch.float64),
            classes=torch.randint(0, 3, (g,)),
            light_index=0,
            futures=torch.zeros(g, 4, 2, dtype=torch.float64),
            future_mask=torch.zeros(g, dtype=torch.bool),
        )
        log_p = torch.log_softmax(logits, -1)
        cost = (-log_p[:, tgt.classes]
                + (boxes.unsqueeze(1) - tgt.boxes.unsqueeze(0)).abs().sum(-1))
        best_cost, best = min(
            (sum(cost[q, i] for i, q in enumerate(p)), p)
            for p in itertools.permutations(range(n_q), g)
        )
        q_idx, g_idx = match_queries(logits, boxes, tgt)
        got = sum(cost[q, i] for q, i in zip(q_idx, g_idx))
        assert float(got) == pytest.approx(float(best_cost), abs=1e-6)

    def test_too_many_gt_rejected(self):
        logits = torch.zeros(1, 4)
        boxes = torch.zeros(1, 5)
        tgt = PerceptionTarget(
            boxes=torch.zeros(2, 5, dtype=torch.float64),
            classes=torch.zeros(2, dtype=torch.long),
            light_index=0,
            futures=torch.zeros(2, 4, 2, dtype=torch.float64),
            future_mask=torch.zeros(2, dtype=torch.bool),
        )
        with pytest.raises(ContractViolation):
            match_queries(logits, boxes, tgt)

    def test_perfect_predictions_zero_losses(self):
        gt_box = torch.tensor([5.0, 0.0, 2.0, 4.0, 0.0])
        logits = torch.full((2, 4), -20.0)
        logits[0, 0] = 20.0  # query 0: vehicle with p ~ 1
        logits[1, 3] = 20.0  # query 1: none with p ~ 1
        boxes = torch.stack([gt_box, torch.zeros(5)])
        perc = self._perception_like(logits, boxes)
        perc.traffic_state_logits[0, 0] = 40.0
        tgt = PerceptionTarget(
            boxes=gt_box.double().unsqueeze(0),
            classes=torch.tensor([0]),
            light_index=0,
            futures=torch.zeros(1, 4, 2, dtype=torch.float64),
            future_mask=torch.tensor([False]),
        )
        out = match_and_supervise(perc, [tgt])
        assert float(out.l_cls) == pytest.approx(0.0, abs=1e-6)
        assert float(out.l_reg) == pytest.approx(0.0, abs=1e-8)
        assert float(out.l_tra) == pytest.approx(0.0, abs=1e-6)

    def test_zero_gt_all_none_queries(self):
        logits = torch.full((3, 4), -20.0)
        logits[:, 3] = 20.0
        perc = self._perception_like(logits, torch.zeros(3, 5))
        perc.traffic_state_logits[0, 0] = 40.0
        tgt = PerceptionTarget(
            boxes=torch.zeros(0, 5, dtype=torch.float64),
            classes=torch.zeros(0, dtype=torch.long),
            light_index=0,
            futures=torch.zeros(0, 4, 2, dtype=torch.float64),
            future_mask=torch.zeros(0, dtype=torch.bool),
        )
        out = match_and_supervise(perc, [tgt])
        assert float(out.l_cls) == pytest.approx(0.0, abs=1e-6)
        assert float(out.l_reg) == 0.0
        assert float(out.l_mcls) == 0.0 and float(out.l_mreg) == 0.0

    def test_motion_losses_on_real_frames(self):
        rec = run_episode(make_scenario("lead_brake", 1), record=True)
        frames = extract_frames(rec)
        enc = GridEncoder(c_f=64)
        model = QTFormer(QTFormerConfig())
        out = model(enc([frames[0].obs]), model.new_memory(), 0)
        tgt = perception_target_from_frame(frames[0].obs, frames[0].agent_futures)
        assert bool(tgt.future_mask.any())
        losses = match_and_supervise(out.perception, [tgt])
        for key in ("l_cls", "l_reg", "l_tra", "l_mcls", "l_mreg"):
            val = getattr(losses, key)
            assert val is not None and torch.isfinite(val)
        total = losses.total()
        total.backward()
        grads = [p.grad for p in model.parameters() if p.grad is not None]
        assert any(g.abs().sum() > 0 for g in grads)


class TestTargetConstruction:
    def test_light_object_included(self):
        obs = _obs(light=LightState.RED, light_x=25.0)
        tgt = perception_target_from_frame(obs, [])
        assert tgt.boxes.shape[0] == 1
        assert int(tgt.classes[0]) == 2
        assert tgt.light_index == 1  # red
        assert not bool(tgt.future_mask[0])

    def test_agents_in_ego_frame(self):
        obs = _obs(agents=[_agent("a", 10.0, 2.2, vx=3.0)])
        tgt = perception_target_from_frame(obs, [("a", np.ones((4, 2)), 1.0)])
        assert tgt.boxes[0, 0] == pytest.approx(10.0)
        assert tgt.boxes[0, 1] == pytest.approx(2.2)
        assert bool(tgt.future_mask[0])
        assert tgt.futures.shape == (1, 4, 2)
