"""End-to-end acceptance suite.

Each test prints one PASS line with the measured numbers; run with
``pytest tests/test_acceptance.py -v -s`` to see them. The statistical
criteria are evaluated on fixed master seeds, so outcomes are exactly
reproducible.
"""

import json
import math
import time

import numpy as np
import pytest

from msbound.checks import (
    BOUNDED,
    GROWING,
    PASS,
    boundedness_verdict,
    drift_condition_check,
    fourth_difference_check,
    noiseless_convergence_check,
    saturated_fourth_bound,
)
from msbound.cli import EXIT_OK, main
from msbound.config import paper_example_config, synthesize
from msbound.engine import (
    monte_carlo_moments,
    simulate_batch,
    simulate_trajectory,
    zero_control_moment_series,
)
from msbound.linalg import min_singular_value, pinv_apply, saturate, spectral_split
from msbound.noise import (
    RngStream,
    cauchy_iid,
    estimate_c1,
    gaussian_iid,
    moment_bounds,
    sample_block,
    zero_noise,
)
from msbound.policies import (
    initial_state,
    policy_step,
    scale_authority,
    synth_random_walk,
    zero_policy,
)
from msbound.system import LinearSystem

CHI4_MEAN = 1.8799712059732507  # E||w|| for w ~ N(0, I_4), sqrt(2) Gamma(2.5) / Gamma(2)
FOLDED_NORMAL_MEAN = math.sqrt(2.0 / math.pi)  # E|w| for a unit Gaussian


def report(num, detail):
    print(f"\nACCEPTANCE {num}: PASS - {detail}")


@pytest.fixture(scope="module")
def cfg():
    return paper_example_config()


@pytest.fixture(scope="module")
def policy_and_report(cfg):
    return synthesize(cfg)


@pytest.fixture(scope="module")
def uncontrolled_mc(cfg):
    t0 = time.perf_counter()
    series = monte_carlo_moments(
        cfg.system, zero_policy(cfg.system.m), cfg.noise, cfg.horizon, cfg.runs,
        cfg.master_seed, cfg.x0,
    )
    return series, time.perf_counter() - t0


@pytest.fixture(scope="module")
def controlled_mc(cfg, policy_and_report):
    policy, _ = policy_and_report
    series = monte_carlo_moments(
        cfg.system, policy, cfg.noise, cfg.horizon, cfg.runs, cfg.master_seed, cfg.x0
    )
    return series


@pytest.fixture(scope="module")
def walk_batch():
    """1-d saturated random walk: r = 2, unit Gaussian noise, x0 = 100."""
    system = LinearSystem(np.eye(1), np.eye(1))
    policy = synth_random_walk(2.0, 1.0)
    noise = gaussian_iid(np.eye(1))
    trajs = simulate_batch(system, policy, noise, 2500, 400, 20260805, [100.0])
    return trajs, noise


def test_criterion_1_synthesis_reproduction(cfg):
    t0 = time.perf_counter()
    policy, rep = synthesize(cfg)
    c1_hat, c1_se = estimate_c1(cfg.noise, 1_000_000, RngStream(cfg.master_seed, 424242))
    elapsed = time.perf_counter() - t0
    assert rep.k == 2
    assert 3.2 <= rep.R <= 4.0
    assert abs(c1_hat - CHI4_MEAN) <= 0.01
    assert rep.r > c1_hat  # the saturation radius clears the estimated noise mean
    assert elapsed < 10.0
    report(1, f"k={rep.k}, R={rep.R:.4f} in [3.2, 4.0], "
              f"c1_hat={c1_hat:.4f} (1e6 draws), {elapsed:.2f}s")


def test_criterion_2_uncontrolled_oracle_agreement(cfg, uncontrolled_mc):
    series, elapsed = uncontrolled_mc
    oracle = zero_control_moment_series(cfg.system, np.eye(4), cfg.x0, cfg.horizon)
    dev = np.abs(series.mean_sq[1:] - oracle[1:]) / series.stderr_sq[1:]
    coverage = float(np.mean(dev <= 3.0))
    assert coverage >= 0.99
    assert abs(series.slope_mean - 2.0) <= 0.2
    assert elapsed < 60.0
    report(2, f"coverage={coverage:.3f} (>=0.99), slope={series.slope_mean:.3f} "
              f"(2.0 +- 0.2), {elapsed:.1f}s for {series.runs}x{series.horizon}")


def test_criterion_3_boundedness_verdicts(cfg, policy_and_report, uncontrolled_mc, controlled_mc):
    policy, rep = policy_and_report
    unc_series, _ = uncontrolled_mc

    oracle = zero_control_moment_series(cfg.system, np.eye(4), cfg.x0, cfg.horizon)
    lo = cfg.horizon // 2
    tt = np.arange(lo, cfg.horizon + 1, dtype=float)
    tc = tt - tt.mean()
    oracle_slope = float((oracle[lo:] @ tc) / (tc @ tc))

    controlled = boundedness_verdict(controlled_mc, growing_slope=oracle_slope)
    assert controlled.verdict == BOUNDED
    assert controlled.ci_lo <= 0.0 <= controlled.ci_hi

    uncontrolled = boundedness_verdict(unc_series)
    assert uncontrolled.verdict == GROWING
    assert uncontrolled.ci_lo <= 2.0 <= uncontrolled.ci_hi

    # one-tenth authority: reported for qualitative comparison only
    tenth = scale_authority(policy, 0.1)
    tenth_series = monte_carlo_moments(
        cfg.system, tenth, cfg.noise, cfg.horizon, cfg.runs, cfg.master_seed, cfg.x0
    )
    plateau_full = float(controlled_mc.mean_sq[-50:].mean())
    plateau_tenth = float(tenth_series.mean_sq[-50:].mean())
    report(3, f"controlled BOUNDED (slope CI [{controlled.ci_lo:.4f}, {controlled.ci_hi:.4f}]), "
              f"uncontrolled GROWING (slope {unc_series.slope_mean:.3f} ~ {oracle_slope:.3f}); "
              f"tail E||x||^2: full authority {plateau_full:.1f}, "
              f"one-tenth {plateau_tenth:.1f} (qualitative)")


def test_criterion_4_finite_time_convergence(cfg, policy_and_report):
    policy, _ = policy_and_report
    # scalar recursion oracle: cycles of exact r-decrease, then one zeroing cycle
    z0 = np.linalg.norm(cfg.x0[:2])
    assert z0 == pytest.approx(math.sqrt(500.0))
    norm, cycles = z0, 0
    while norm > policy.r:
        norm -= policy.r
        cycles += 1
    cycles += 1  # the final in-ball cycle zeroes the block
    expected_steps = policy.k * cycles
    assert expected_steps == 24

    conv = noiseless_convergence_check(cfg.system, policy, cfg.x0)
    assert conv.steps == expected_steps == 24
    assert conv.max_control_after <= 1e-12

    traj = simulate_trajectory(
        cfg.system, policy, zero_noise(4), 400, RngStream(0, 0), cfg.x0
    )
    final_norm = float(np.linalg.norm(traj.states[400]))
    assert final_norm < 1e-6
    report(4, f"circle block zero at exactly {conv.steps} steps "
              f"({cycles} cycles x k={policy.k}), controls <= {conv.max_control_after:.1e} "
              f"after, ||x_400|| = {final_norm:.2e} < 1e-6")


def test_criterion_5_drift_hypothesis(walk_batch):
    trajs, _ = walk_batch
    rep = drift_condition_check(trajs, J=2.0, r=2.0, c1=FOLDED_NORMAL_MEAN)
    oracle = -(2.0 - FOLDED_NORMAL_MEAN)
    assert rep.n_events >= 10_000
    assert rep.verdict == PASS  # all-events drift respects the -(r - C1) bound
    # at the excursion threshold the drift equals the folded-normal value
    assert abs(rep.b_threshold_hat - oracle) <= 0.05
    report(5, f"{rep.n_events} excursion events; threshold drift "
              f"{rep.b_threshold_hat:.4f} vs oracle {oracle:.4f} (+-0.05); "
              f"all-events drift {rep.b_hat:.4f} <= bound {rep.bound:.4f}")


def test_criterion_6_fourth_difference_hypothesis(walk_batch):
    trajs, noise = walk_batch
    w_norms = np.abs(
        sample_block(noise, RngStream(20260805, 10**6), np.arange(1_000_000))
    ).ravel()
    est, se = saturated_fourth_bound(w_norms, 2.0)
    # analytic cross-check: E[(2+|w|)^4] = 43 + 48 sqrt(2/pi)
    analytic = 16 + 24 + 3 + (32 + 16) * FOLDED_NORMAL_MEAN
    assert est == pytest.approx(analytic, abs=0.5)
    rep = fourth_difference_check(trajs, 2.0, est, se)
    assert rep.verdict == PASS
    report(6, f"max mean |dxi|^4 = {rep.m4_hat:.2f} <= "
              f"E[(r+||w||)^4] estimate {est:.2f} + 3x{se:.3f}")


def test_criterion_7_exact_algebraic_identities(cfg, policy_and_report, rng):
    policy, _ = policy_and_report
    split = policy.split

    # (a) noiseless sub-sampled identity, every cycle of a long run
    traj = simulate_trajectory(
        cfg.system, policy, zero_noise(4), 60, RngStream(0, 0), cfg.x0
    )
    proj = split.T_inv[split.d1 :]
    z = traj.states @ proj.T
    worst = 0.0
    for tau in range(60 // policy.k - 1):
        z_now = z[tau * policy.k]
        z_next = z[(tau + 1) * policy.k]
        expected = policy.abar @ (z_now - saturate(z_now, policy.r))
        worst = max(worst, float(np.linalg.norm(z_next - expected)))
    assert worst <= 1e-10

    # (b) split reconstruction and circle-block orthogonality
    import scipy.linalg

    recon = split.T @ scipy.linalg.block_diag(split.A11, split.A22) @ split.T_inv
    recon_err = float(np.linalg.norm(recon - cfg.system.A))
    orth_err = float(np.linalg.norm(split.A22 @ split.A22.T - np.eye(split.d2)))
    assert recon_err <= 1e-8
    assert orth_err <= 1e-8

    # (c) allocation bound on 1000 random full-row-rank instances
    checked = 0
    attempts = 0
    while checked < 1000:
        attempts += 1
        assert attempts < 20_000
        d = int(rng.integers(1, 7))
        k = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        if k * m < d:
            continue
        mat = rng.normal(size=(d, k * m))
        sigma = min_singular_value(mat)
        if sigma < 1e-8:
            continue
        r = float(rng.uniform(0.1, 10.0))
        v = rng.normal(size=d)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v *= r * float(rng.uniform(0, 1)) / nv
        u = pinv_apply(mat, v)
        assert np.linalg.norm(mat @ u - v) <= 1e-10 * max(1.0, r)
        blocks = u.reshape(k, m)
        assert np.all(np.linalg.norm(blocks, axis=1) <= r / sigma * (1 + 1e-9))
        checked += 1

    report(7, f"cycle identity residual {worst:.2e} <= 1e-10; reconstruction "
              f"{recon_err:.2e} and orthogonality {orth_err:.2e} <= 1e-8; "
              f"allocation bound held on {checked} random instances")


def test_criterion_8_bit_reproducibility(tmp_path):
    raw = paper_example_config(runs=30, horizon=80).to_dict()
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(raw))
    outputs = {}
    for tag, extra in {
        "rerun_a": ["--jobs", "1"],
        "rerun_b": ["--jobs", "1"],
        "jobs4": ["--jobs", "4"],
        "jobs8": ["--jobs", "8"],
    }.items():
        out = tmp_path / f"{tag}.csv"
        rc = main(["simulate", "--config", str(cfg_path), "--csv", str(out)] + extra)
        assert rc == EXIT_OK
        outputs[tag] = out.read_bytes()
    assert outputs["rerun_a"] == outputs["rerun_b"]
    assert outputs["rerun_a"] == outputs["jobs4"] == outputs["jobs8"]
    report(8, f"CSV byte-identical across reruns and worker counts 1/4/8 "
              f"({len(outputs['rerun_a'])} bytes)")


def test_criterion_9_cauchy_negative_test():
    noise = cauchy_iid(1, scale=1.0)
    assert moment_bounds(noise).violates_moments

    system = LinearSystem(np.eye(1), np.eye(1))
    N, T = 800, 200
    series = monte_carlo_moments(system, zero_policy(1), noise, T, N, 77, [0.0])
    assert np.all(np.isfinite(series.mean_sq))  # no crash, flags instead

    # the running mean of ||x_T||^2 over the first n runs keeps jumping:
    # single draws repeatedly double the average, so it never stabilizes
    finals = np.array([
        float(np.linalg.norm(
            simulate_trajectory(system, zero_policy(1), noise, T, RngStream(77, run), [0.0])
            .states[-1]
        ) ** 2)
        for run in range(N)
    ])
    running = np.cumsum(finals) / np.arange(1, N + 1)
    jumps = running[100:] / running[99:-1]
    assert jumps.max() >= 2.0
    report(9, f"moment-violating flag set; running mean of ||x_T||^2 jumps by "
              f"{jumps.max():.1f}x after n=100 runs (no stabilization), no crash")
