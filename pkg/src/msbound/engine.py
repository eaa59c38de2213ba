"""Closed-loop simulation and seeded parallel Monte Carlo moment estimation.

Runs are independent tasks addressed by (master_seed, run index); noise is
drawn from per-(run, step) counter blocks and results are aggregated in
fixed run order, so the output is bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailureError
from .linalg import EPS_RESID, as_matrix, as_vector
from .noise import NoiseModel, RngStream, sample_block
from .policies import Policy, initial_state, policy_step
from .system import LinearSystem

__all__ = [
    "DIVERGENCE_LIMIT",
    "Trajectory",
    "MomentSeries",
    "simulate_trajectory",
    "simulate_batch",
    "monte_carlo_moments",
    "zero_control_moment_oracle",
    "zero_control_moment_series",
]

DIVERGENCE_LIMIT = 1e12


@dataclass
class Trajectory:
    """One closed-loop run: states x_0..x_T, controls u_0..u_{T-1}, noise w_t.

    ``diverged_at`` is the first index where the state norm exceeded
    ``DIVERGENCE_LIMIT``; arrays are truncated there (states has
    ``diverged_at + 1`` rows) and the run carries no further data.
    """

    states: np.ndarray
    controls: np.ndarray
    noise: np.ndarray | None
    run: int
    master_seed: int
    diverged_at: int | None = None

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    def state_norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def replay_residual(self, system: LinearSystem) -> float:
        """Max recursion residual ||x_{t+1} - (A x_t + B u_t + w_t)||."""
        if self.noise is None:
            raise ValueError("trajectory was recorded without noise")
        pred = (
            self.states[:-1] @ system.A.T
            + self.controls @ system.B.T
            + self.noise[: self.horizon]
        )
        return float(np.max(np.linalg.norm(self.states[1:] - pred, axis=1), initial=0.0))


@dataclass
class MomentSeries:
    """Per-step empirical moments of the state norm over N runs.

    ``mean_sq[t]`` estimates E||x_t||^2 with standard error ``stderr_sq[t]``.
    Diverged runs are excluded from the moments; ``completeness`` is the
    surviving fraction. ``slope_mean``/``slope_se`` summarize the per-run
    least-squares slope of ||x_t||^2 over ``slope_window`` (runs are
    independent, so the standard error is honest even though the series is
    autocorrelated in t).
    """

    mean_sq: np.ndarray
    stderr_sq: np.ndarray
    mean_norm: np.ndarray
    max_u_norm: np.ndarray
    runs: int
    horizon: int
    n_diverged: int
    completeness: float
    slope_mean: float
    slope_se: float
    slope_window: tuple[int, int]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.horizon + 1)


def simulate_trajectory(
    system: LinearSystem,
    policy: Policy,
    noise: NoiseModel,
    T: int,
    stream: RngStream,
    x0,
    record_noise: bool = True,
) -> Trajectory:
    """Simulate x_{t+1} = A x_t + B u_t + w_t for T steps from x0.

    Deterministic per (master_seed, run). Every control norm is audited
    against the policy's authority bound. A state norm above
    ``DIVERGENCE_LIMIT`` truncates the run instead of raising.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    a, b = system.A, system.B
    x = as_vector(x0, "x0")
    if x.shape[0] != system.d:
        raise ValueError(f"x0 has length {x.shape[0]}, state dimension is {system.d}")
    if noise.d != system.d:
        raise ValueError(f"noise dimension {noise.d} != state dimension {system.d}")

    w = sample_block(noise, stream, np.arange(T, dtype=np.uint64))
    states = np.empty((T + 1, system.d))
    controls = np.empty((T, system.m))
    states[0] = x
    state = initial_state(policy)
    bound = policy.authority + EPS_RESID * max(policy.authority, 1.0)
    diverged_at = None
    for t in range(T):
        u, state = policy_step(policy, state, x, t)
        if np.linalg.norm(u) > bound:
            raise NumericalFailureError(
                f"control norm {np.linalg.norm(u):.6e} exceeds authority {policy.authority:.6e}"
            )
        controls[t] = u
        x = a @ x + b @ u + w[t]
        states[t + 1] = x
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_LIMIT:
            diverged_at = t + 1
            states = states[: t + 2]
            controls = controls[: t + 1]
            w = w[: t + 1]
            break
    return Trajectory(
        states=states,
        controls=controls,
        noise=w if record_noise else None,
        run=stream.run,
        master_seed=stream.master_seed,
        diverged_at=diverged_at,
    )


def simulate_batch(
    system: LinearSystem,
    policy: Policy,
    noise: NoiseModel,
    T: int,
    N: int,
    master_seed: int,
    x0,
    record_noise: bool = False,
) -> list[Trajectory]:
    """Trajectories for runs 0..N-1 (same streams the moment engine uses)."""
    return [
        simulate_trajectory(
            system, policy, noise, T, RngStream(master_seed, run), x0, record_noise
        )
        for run in range(N)
    ]


def _run_reductions(args) -> None:
    (system, policy, noise, T, master_seed, x0, run, sq, un, alive) = args
    traj = simulate_trajectory(
        system, policy, noise, T, RngStream(master_seed, run), x0, record_noise=False
    )
    if traj.diverged_at is None:
        norms = traj.state_norms()
        sq[run] = norms * norms
        un[run] = np.linalg.norm(traj.controls, axis=1)
        alive[run] = True


def monte_carlo_moments(
    system: LinearSystem,
    policy: Policy,
    noise: NoiseModel,
    T: int,
    N: int,
    master_seed: int,
    x0,
    n_jobs: int = 1,
) -> MomentSeries:
    """Empirical E||x_t||^2 (with standard errors) over N independent runs.

    Output is identical for identical ``master_seed`` regardless of
    ``n_jobs``: run i always uses stream (master_seed, i) and aggregation
    happens on arrays indexed by run.
    """
    if N < 2:
        raise ValueError("need at least 2 runs")
    sq = np.full((N, T + 1), np.nan)
    un = np.full((N, T), np.nan)
    alive = np.zeros(N, dtype=bool)
    jobs = [
        (system, policy, noise, T, master_seed, x0, run, sq, un, alive) for run in range(N)
    ]
    if n_jobs <= 1:
        for job in jobs:
            _run_reductions(job)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(_run_reductions, jobs))

    n_alive = int(np.count_nonzero(alive))
    if n_alive == 0:
        raise NumericalFailureError("all runs diverged; no moments to report")
    sq_a = sq[alive]
    mean_sq = sq_a.mean(axis=0)
    stderr_sq = (
        sq_a.std(axis=0, ddof=1) / np.sqrt(n_alive) if n_alive > 1 else np.zeros(T + 1)
    )
    mean_norm = np.sqrt(sq_a).mean(axis=0)
    max_u = un[alive].max(axis=0)

    lo, hi = T // 2, T
    window_t = np.arange(lo, hi + 1, dtype=float)
    tc = window_t - window_t.mean()
    denom = float(tc @ tc)
    slopes = (sq_a[:, lo : hi + 1] @ tc) / denom
    slope_mean = float(slopes.mean())
    slope_se = float(slopes.std(ddof=1) / np.sqrt(n_alive)) if n_alive > 1 else 0.0

    return MomentSeries(
        mean_sq=mean_sq,
        stderr_sq=stderr_sq,
        mean_norm=mean_norm,
        max_u_norm=max_u,
        runs=N,
        horizon=T,
        n_diverged=N - n_alive,
        completeness=n_alive / N,
        slope_mean=slope_mean,
        slope_se=slope_se,
        slope_window=(lo, hi),
    )


def zero_control_moment_series(system: LinearSystem, Q, x0, T: int) -> np.ndarray:
    """Exact E||x_t||^2 for the uncontrolled system with time-invariant
    noise covariance Q, for t = 0..T.

    Propagates the covariance recursion S_{t+1} = A S_t A^T + Q alongside
    the mean A^t x0, so the value at t is ||A^t x0||^2 + trace(S_t).
    """
    a = system.A
    q = as_matrix(Q, "Q")
    if q.shape != (system.d, system.d):
        raise ValueError(f"Q must be {system.d}x{system.d}, got {q.shape}")
    mu = as_vector(x0, "x0").copy()
    s = np.zeros_like(q)
    out = np.empty(T + 1)
    for t in range(T + 1):
        out[t] = float(mu @ mu + np.trace(s))
        if t < T:
            mu = a @ mu
            s = a @ s @ a.T + q
    return out


def zero_control_moment_oracle(system: LinearSystem, Q, x0, t: int) -> float:
    """Exact E||x_t||^2 of the uncontrolled system at a single time."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(zero_control_moment_series(system, Q, x0, t)[t])
