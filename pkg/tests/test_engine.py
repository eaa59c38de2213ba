import numpy as np
import pytest

from msbound.engine import (
    DIVERGENCE_LIMIT,
    monte_carlo_moments,
    simulate_batch,
    simulate_trajectory,
    zero_control_moment_oracle,
    zero_control_moment_series,
)
from msbound.noise import RngStream, cauchy_iid, gaussian_iid, zero_noise
from msbound.policies import synth_random_walk, zero_policy
from msbound.system import LinearSystem, benchmark_system


def identity_system(d=2):
    return LinearSystem(np.eye(d), np.eye(d))


class TestSimulateTrajectory:
    def test_fixed_point(self):
        # zero noise, zero policy, identity dynamics: the state never moves
        sys = identity_system()
        traj = simulate_trajectory(
            sys, zero_policy(2), zero_noise(2), 20, RngStream(0, 0), [1.0, -2.0]
        )
        assert np.allclose(traj.states, np.tile([1.0, -2.0], (21, 1)))
        assert np.allclose(traj.controls, 0.0)

    def test_deterministic_rerun(self, bench_cfg, bench_policy):
        policy, _ = bench_policy
        a = simulate_trajectory(
            bench_cfg.system, policy, bench_cfg.noise, 200, RngStream(7, 3), bench_cfg.x0
        )
        b = simulate_trajectory(
            bench_cfg.system, policy, bench_cfg.noise, 200, RngStream(7, 3), bench_cfg.x0
        )
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.controls, b.controls)

    def test_replay_invariant(self, bench_cfg, bench_policy):
        policy, _ = bench_policy
        traj = simulate_trajectory(
            bench_cfg.system, policy, bench_cfg.noise, 300, RngStream(11, 0), bench_cfg.x0
        )
        assert traj.replay_residual(bench_cfg.system) < 1e-10

    def test_noiseless_benchmark_circle_zero_and_decay(self, bench_cfg, bench_policy):
        policy, _ = bench_policy
        split = policy.split
        traj = simulate_trajectory(
            bench_cfg.system, policy, zero_noise(4), 340, RngStream(0, 0), bench_cfg.x0
        )
        circle = np.linalg.norm(traj.states @ split.T_inv[split.d1 :].T, axis=1)
        assert np.all(circle[24:] <= 1e-12)
        assert circle[22] > 1e-12
        # contracting modes decay at rate 0.9 from (30, 40)
        assert np.linalg.norm(traj.states[340]) < 1e-6

    def test_divergence_truncates(self):
        # marginal scalar system, huge-scale Cauchy noise: runs must truncate,
        # not crash
        sys = LinearSystem([[1.0]], [[1.0]])
        noise = cauchy_iid(1, scale=1e11)
        diverged = 0
        for run in range(20):
            traj = simulate_trajectory(
                sys, zero_policy(1), noise, 50, RngStream(123, run), [0.0]
            )
            if traj.diverged_at is not None:
                diverged += 1
                assert traj.states.shape[0] == traj.diverged_at + 1
                assert np.linalg.norm(traj.states[-1]) > DIVERGENCE_LIMIT
        assert diverged > 0

    def test_authority_audit(self, bench_cfg, bench_policy):
        policy, report = bench_policy
        traj = simulate_trajectory(
            bench_cfg.system, policy, bench_cfg.noise, 400, RngStream(5, 2), bench_cfg.x0
        )
        assert np.linalg.norm(traj.controls, axis=1).max() <= report.R + 1e-9


class TestMonteCarloMoments:
    def test_zero_noise_zero_variance(self, bench_cfg, bench_policy):
        policy, _ = bench_policy
        series = monte_carlo_moments(
            bench_cfg.system, policy, zero_noise(4), 250, 4, 0, bench_cfg.x0
        )
        ref = simulate_trajectory(
            bench_cfg.system, policy, zero_noise(4), 250, RngStream(0, 0), bench_cfg.x0
        )
        assert np.allclose(series.mean_sq, ref.state_norms() ** 2)
        assert np.allclose(series.stderr_sq, 0.0)

    def test_thread_counts_bit_identical(self, bench_cfg, bench_policy):
        policy, _ = bench_policy
        results = [
            monte_carlo_moments(
                bench_cfg.system, policy, bench_cfg.noise, 120, 48,
                bench_cfg.master_seed, bench_cfg.x0, n_jobs=jobs,
            )
            for jobs in (1, 4, 8)
        ]
        for other in results[1:]:
            assert np.array_equal(results[0].mean_sq, other.mean_sq)
            assert np.array_equal(results[0].stderr_sq, other.stderr_sq)
            assert np.array_equal(results[0].max_u_norm, other.max_u_norm)

    def test_diverged_runs_reported(self):
        # scale chosen so some runs blow past the limit and some survive
        sys = LinearSystem([[1.0]], [[1.0]])
        noise = cauchy_iid(1, scale=2e10)
        series = monte_carlo_moments(sys, zero_policy(1), noise, 40, 30, 123, [0.0])
        assert 0 < series.n_diverged < 30
        assert series.completeness == pytest.approx(1 - series.n_diverged / 30)
        assert np.all(np.isfinite(series.mean_sq))

    def test_requires_two_runs(self, bench_cfg, bench_policy):
        policy, _ = bench_policy
        with pytest.raises(ValueError):
            monte_carlo_moments(
                bench_cfg.system, policy, bench_cfg.noise, 10, 1, 0, bench_cfg.x0
            )


class TestZeroControlOracle:
    def test_t_zero_is_initial_norm(self):
        sys = benchmark_system()
        x0 = [10.0, 20.0, 30.0, 40.0]
        assert zero_control_moment_oracle(sys, np.eye(4), x0, 0) == pytest.approx(
            np.dot(x0, x0)
        )

    def test_random_walk_variance(self):
        # A = I, Q = I: E||x_t||^2 = ||x0||^2 + d t
        sys = identity_system(3)
        series = zero_control_moment_series(sys, np.eye(3), [1.0, 0.0, 0.0], 50)
        assert np.allclose(series, 1.0 + 3.0 * np.arange(51))

    def test_benchmark_closed_form(self):
        # block-diagonal trace sum: 2t + geometric series of the contracting
        # modes + ||A^t x0||^2
        sys = benchmark_system()
        x0 = np.array([10.0, 20.0, 30.0, 40.0])
        t = np.arange(201)
        closed = (
            2.0 * t
            + (1 - 0.25**t) / 0.75
            + (1 - 0.81**t) / 0.19
            + 500.0
            + 900.0 * 0.25**t
            + 1600.0 * 0.81**t
        )
        series = zero_control_moment_series(sys, np.eye(4), x0, 200)
        assert np.allclose(series, closed, rtol=1e-12)

    def test_monte_carlo_agreement(self, bench_cfg):
        series = monte_carlo_moments(
            bench_cfg.system, zero_policy(1), bench_cfg.noise, 200, 400,
            bench_cfg.master_seed, bench_cfg.x0,
        )
        oracle = zero_control_moment_series(bench_cfg.system, np.eye(4), bench_cfg.x0, 200)
        dev = np.abs(series.mean_sq[1:] - oracle[1:]) / series.stderr_sq[1:]
        assert np.mean(dev <= 3.0) >= 0.99


def test_batch_matches_streams(bench_cfg, bench_policy):
    policy, _ = bench_policy
    batch = simulate_batch(
        bench_cfg.system, policy, bench_cfg.noise, 50, 3, 99, bench_cfg.x0
    )
    for run, traj in enumerate(batch):
        ref = simulate_trajectory(
            bench_cfg.system, policy, bench_cfg.noise, 50, RngStream(99, run), bench_cfg.x0
        )
        assert np.array_equal(traj.states, ref.states)
