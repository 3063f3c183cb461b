import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from deskdrive.core import (
    ContractViolation,
    DiagonalGaussian,
    Trajectory,
    avg_l2,
    boundary_loss,
    collision_loss,
    focal_loss,
    kl_diagonal_gaussian,
    trajectory_mse,
)
from deskdrive.core.gradcheck import max_gradcheck_error


def gaussian(mean, log_var):
    return DiagonalGaussian(
        torch.as_tensor(mean, dtype=torch.float64).reshape(-1),
        torch.as_tensor(log_var, dtype=torch.float64).reshape(-1),
    )


def mc_kl_1d(mu_p, sig_p, mu_q, sig_q, n=1_000_000, seed=0):
    """Monte-Carlo KL oracle: E_p[log p(x) - log q(x)] with standard error."""
    rng = np.random.default_rng(seed)
    x = rng.normal(mu_p, sig_p, size=n)
    log_p = -0.5 * ((x - mu_p) / sig_p) ** 2 - np.log(sig_p)
    log_q = -0.5 * ((x - mu_q) / sig_q) ** 2 - np.log(sig_q)
    diff = log_p - log_q
    return diff.mean(), diff.std(ddof=1) / np.sqrt(n)


class TestKL:
    def test_identical_is_zero(self):
        p = gaussian(np.zeros(4), np.zeros(4))
        assert float(kl_diagonal_gaussian(p, p)) == pytest.approx(0.0, abs=1e-12)

    def test_unit_shift(self):
        # KL(N(0,1) || N(1,1)) = 0.5; Monte-Carlo oracle agrees within 0.01
        est, _ = mc_kl_1d(0.0, 1.0, 1.0, 1.0)
        assert abs(est - 0.5) < 0.01
        val = float(kl_diagonal_gaussian(gaussian([0.0], [0.0]), gaussian([1.0], [0.0])))
        assert val == pytest.approx(0.5, abs=1e-12)
        assert abs(val - est) < 0.01

    def test_variance_mismatch(self):
        # KL(N(0,4) || N(0,1)) = log(1/2) + 4/2 - 1/2 = 0.806853...
        val = float(kl_diagonal_gaussian(gaussian([0.0], [np.log(4.0)]), gaussian([0.0], [0.0])))
        assert val == pytest.approx(0.8068528194400547, abs=1e-12)
        est, se = mc_kl_1d(0.0, 2.0, 0.0, 1.0)
        assert abs(val - est) < max(0.01, 3 * se)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            kl_diagonal_gaussian(gaussian(np.zeros(2), np.zeros(2)), gaussian(np.zeros(3), np.zeros(3)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 8))
        p = gaussian(rng.normal(size=d), rng.normal(scale=1.5, size=d))
        q = gaussian(rng.normal(size=d), rng.normal(scale=1.5, size=d))
        assert float(kl_diagonal_gaussian(p, q)) >= -1e-9

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            d = int(rng.integers(1, 6))
            mean, log_var = rng.normal(size=d), rng.normal(size=d)
            p = gaussian(mean, log_var)
            q = gaussian(mean.copy(), log_var.copy())
            assert float(kl_diagonal_gaussian(p, q)) == pytest.approx(0.0, abs=1e-9)
            q2 = gaussian(mean + 0.1, log_var)
            assert float(kl_diagonal_gaussian(p, q2)) > 1e-6

    def test_monte_carlo_agreement_100_pairs(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            mu_p, mu_q = rng.normal(size=2)
            sig_p, sig_q = np.exp(rng.normal(scale=0.5, size=2))
            closed = float(
                kl_diagonal_gaussian(
                    gaussian([mu_p], [2 * np.log(sig_p)]),
                    gaussian([mu_q], [2 * np.log(sig_q)]),
                )
            )
            est, se = mc_kl_1d(mu_p, sig_p, mu_q, sig_q, n=100_000, seed=int(rng.integers(2**31)))
            assert abs(closed - est) <= 3 * se + 1e-9


class TestFocal:
    def test_perfect_prediction(self):
        assert float(focal_loss(torch.tensor(1.0, dtype=torch.float64), True)) == pytest.approx(0.0)

    def test_half_confidence(self):
        # 0.25 * 0.25 * ln 2
        val = float(focal_loss(torch.tensor(0.5, dtype=torch.float64), True, alpha=0.25, gamma=2.0))
        assert val == pytest.approx(0.25 * 0.25 * np.log(2.0), rel=1e-12)
        assert val == pytest.approx(0.043321698784996581, rel=1e-9)

    def test_gamma_zero_is_cross_entropy(self):
        val = float(focal_loss(torch.tensor(0.5, dtype=torch.float64), True, alpha=1.0, gamma=0.0))
        assert val == pytest.approx(np.log(2.0), rel=1e-12)

    def test_clamp_at_zero_probability(self):
        val = float(focal_loss(torch.tensor(0.0, dtype=torch.float64), True))
        assert np.isfinite(val)

    def test_monotone_decreasing_in_pt(self):
        ps = torch.linspace(0.01, 1.0, 200, dtype=torch.float64)
        vals = [float(focal_loss(p, True, alpha=0.25, gamma=2.0)) for p in ps]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def traj(points, dt=0.5):
    return Trajectory(np.asarray(points, dtype=np.float64), dt=dt)


class TestAvgL2:
    def test_identity(self):
        t = traj([(1, 0), (2, 0), (3, 0), (4, 0)])
        assert avg_l2(t, t) == 0.0

    def test_hand_sum(self):
        pred = traj([(1, 0), (2, 0), (3, 0), (4, 0)])
        gt = traj([(1, 0), (2, 0), (3, 1), (4, 0)])
        assert avg_l2(pred, gt) == pytest.approx(0.25, abs=1e-12)

    def test_uniform_shift_hypotenuse(self):
        gt = traj([(1, 0), (2, 0), (3, 0), (4, 0)])
        pred = traj(gt.waypoints + np.array([0.3, 0.4]))
        assert avg_l2(pred, gt) == pytest.approx(0.5, abs=1e-12)

    def test_horizon_mismatch(self):
        with pytest.raises(ContractViolation):
            avg_l2(traj([(0, 0)]), traj([(0, 0), (1, 0)]))

    @given(st.floats(-50, 50), st.floats(-50, 50), st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_translation_covariance(self, dx, dy, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 2))
        b = rng.normal(size=(4, 2))
        shift = np.array([dx, dy])
        base = avg_l2(traj(a), traj(b))
        shifted = avg_l2(traj(a + shift), traj(b + shift))
        assert shifted == pytest.approx(base, rel=1e-9, abs=1e-9)


class TestTrajectoryMse:
    def test_identity(self):
        t = traj([(1, 2), (3, 4)])
        assert float(trajectory_mse(t, t)) == 0.0

    def test_single_point(self):
        assert float(trajectory_mse(traj([(1, 1)]), traj([(0, 0)]))) == pytest.approx(1.0)

    def test_uniform_offset(self):
        gt = traj([(1, 0), (2, 0), (3, 0), (4, 0)])
        pred = traj(gt.waypoints + np.array([0.3, 0.4]))
        assert float(trajectory_mse(pred, gt)) == pytest.approx(0.125, abs=1e-12)

    def test_translation_covariance(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        shift = np.array([3.3, -2.1])
        assert float(trajectory_mse(traj(a + shift), traj(b + shift))) == pytest.approx(
            float(trajectory_mse(traj(a), traj(b))), rel=1e-12
        )


class TestCollisionBoundary:
    def test_no_agents(self):
        t = traj([(1, 0), (2, 0), (3, 0), (4, 0)])
        assert float(collision_loss(t, [])) == 0.0

    def test_far_agent(self):
        t = traj([(1, 0), (2, 0), (3, 0), (4, 0)])
        far = traj(t.waypoints + np.array([100.0, 0.0]))
        assert float(collision_loss(t, [(far, 1.0)])) == 0.0

    def test_hinge_value(self):
        t = traj([(0.0, 0.0)])
        agent = traj([(1.0, 0.0)])
        val = float(collision_loss(t, [(agent, 1.0)], ego_radius=1.0, margin=0.5))
        assert val == pytest.approx(2.25, abs=1e-12)

    def test_boundary_inside(self):
        t = traj([(1, 0), (2, 0)])
        assert float(boundary_loss(t, lane_half_width=3.5, margin=0.5)) == 0.0

    def test_boundary_at_soft_edge(self):
        assert float(boundary_loss(traj([(1, 3.0)]), 3.5, 0.5)) == 0.0

    def test_boundary_hinge(self):
        assert float(boundary_loss(traj([(1, 4.0)]), 3.5, 0.5)) == pytest.approx(1.0, abs=1e-12)

    def test_positive_when_violated(self):
        t = traj([(1.0, 0.0)])
        agent = traj([(1.5, 0.0)])
        assert float(collision_loss(t, [(agent, 1.0)])) > 0

    def test_continuity_probe(self):
        # hinge^2 is C^1: small coordinate perturbations move the loss smoothly
        rng = np.random.default_rng(3)
        for _ in range(20):
            wp = rng.normal(scale=2.0, size=(4, 2))
            agent = rng.normal(scale=2.0, size=(4, 2))
            base_c = float(collision_loss(traj(wp), [(traj(agent), 1.0)]))
            base_b = float(boundary_loss(traj(wp)))
            eps = 1e-6
            bumped = wp.copy()
            bumped[2, 1] += eps
            assert abs(float(collision_loss(traj(bumped), [(traj(agent), 1.0)])) - base_c) < 1e-4
            assert abs(float(boundary_loss(traj(bumped))) - base_b) < 1e-4


class TestLossGradients:
    def test_all_losses_match_finite_differences(self):
        rng = np.random.default_rng(11)
        pred = torch.tensor(rng.normal(scale=2.0, size=(4, 2)), requires_grad=True)
        gt = torch.tensor(rng.normal(scale=2.0, size=(4, 2)))
        agent = torch.tensor(rng.normal(scale=2.0, size=(4, 2)))
        mean_p = torch.tensor(rng.normal(size=8), requires_grad=True)
        lv_p = torch.tensor(rng.normal(size=8), requires_grad=True)
        mean_q = torch.tensor(rng.normal(size=8))
        lv_q = torch.tensor(rng.normal(size=8))
        logit = torch.tensor(0.3, dtype=torch.float64, requires_grad=True)

        def combined():
            kl = kl_diagonal_gaussian(
                DiagonalGaussian(mean_p, lv_p), DiagonalGaussian(mean_q, lv_q)
            )
            mse = trajectory_mse(pred, gt)
            col = collision_loss(pred, [(agent, 1.0)])
            bd = boundary_loss(pred)
            foc = focal_loss(torch.sigmoid(logit), True)
            return kl + mse + col + bd + foc

        err = max_gradcheck_error(
            combined,
            {"pred": pred, "mean_p": mean_p, "lv_p": lv_p, "logit": logit},
            coords_per_tensor=6,
        )
        assert err < 1e-4
