"""Empirical verification of the drift and moment hypotheses and of the
closed-loop conclusions (mean-square boundedness, finite-time convergence).

The excursion drift of the chain xi_t = ||x_t|| is checked two ways:

- ``b_hat``: the conditional mean of xi_{t+1} - xi_t over all excursion
  events {xi_t > J}. The theory guarantees this is at most -(r - C1); the
  empirical value is typically more negative, because states deep in the
  excursion region lose close to the full saturation radius per step.
- ``b_threshold_hat``: the same mean restricted to events just above the
  threshold (xi_t in (J, J + width]). At the threshold the expected loss
  is exactly r - E||w||, so this estimator converges to -(r - C1) itself
  and can be compared to it as an equality, not just an inequality.

For cycle-length-k policies both are evaluated on the sub-sampled chain
(x_{tau k}), optionally after projecting onto the circle block, since that
is the chain with the saturated-random-walk structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Trajectory, MomentSeries, simulate_trajectory
from .errors import MsboundError
from .linalg import EPS_RESID
from .noise import NoiseModel, RngStream, sample_block, zero_noise
from .policies import Policy, PolicyVariant
from .system import LinearSystem

__all__ = [
    "DriftReport",
    "FourthDifferenceReport",
    "BoundednessReport",
    "ConvergenceReport",
    "excursion_chains",
    "drift_condition_check",
    "fourth_difference_check",
    "saturated_fourth_bound",
    "chain_noise_norms",
    "boundedness_verdict",
    "noiseless_convergence_check",
]

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
BOUNDED, GROWING = "BOUNDED", "GROWING"


@dataclass(frozen=True)
class DriftReport:
    """Excursion-drift statistics of the norm chain against threshold J."""

    J: float
    r: float
    c1: float
    n_events: int
    b_hat: float
    b_stderr: float
    n_threshold_events: int
    b_threshold_hat: float
    b_threshold_stderr: float
    m4_hat: float
    verdict: str

    @property
    def bound(self) -> float:
        """The guaranteed drift -(r - C1)."""
        return -(self.r - self.c1)


@dataclass(frozen=True)
class FourthDifferenceReport:
    """Largest per-step mean fourth difference of the norm chain, versus the
    estimated ceiling E[(r + ||w||)^4]."""

    m4_hat: float
    bound_estimate: float
    bound_stderr: float
    verdict: str


@dataclass(frozen=True)
class BoundednessReport:
    """Second-half slope of the E||x_t||^2 series with a 3-sigma interval."""

    verdict: str
    slope: float
    ci_lo: float
    ci_hi: float
    window: tuple[int, int]


@dataclass(frozen=True)
class ConvergenceReport:
    """Finite-time convergence of the circle block in the noiseless loop."""

    steps: int
    circle_norm_at_steps: float
    max_control_after: float
    final_state_norm: float


def excursion_chains(
    trajectories: list[Trajectory], stride: int = 1, projection: np.ndarray | None = None
) -> list[np.ndarray]:
    """Norm chains xi_tau = ||P x_{tau * stride}|| for each trajectory."""
    chains = []
    for traj in trajectories:
        states = traj.states[::stride]
        if projection is not None:
            states = states @ projection.T
        chains.append(np.linalg.norm(states, axis=1))
    return chains


def policy_chain_args(policy: Policy) -> tuple[int, np.ndarray | None]:
    """(stride, projection) of the chain the drift guarantee applies to."""
    if policy.variant is PolicyVariant.GENERAL_COMPOSITE:
        return policy.k, policy.split.T_inv[policy.split.d1 :]
    if policy.variant is PolicyVariant.SUBSAMPLED:
        return policy.k, None
    return 1, None


def drift_condition_check(
    trajectories: list[Trajectory],
    J: float,
    r: float,
    c1: float,
    stride: int = 1,
    projection: np.ndarray | None = None,
    threshold_width: float | None = None,
) -> DriftReport:
    """Empirical excursion drift of the norm chain, with PASS/FAIL verdict.

    PASS means the all-events conditional mean is at most -(r - C1) plus
    three standard errors. With no excursion events the verdict is
    INCONCLUSIVE. ``threshold_width`` (default 2.5% of J) controls the
    near-threshold band used for the equality estimator.
    """
    if J < r:
        raise ValueError(f"excursion threshold J={J} must be >= r={r}")
    if threshold_width is None:
        threshold_width = 0.025 * J
    chains = np.stack(excursion_chains(trajectories, stride, projection))
    diffs = np.diff(chains, axis=1)
    prev = chains[:, :-1]
    events = prev > J
    deltas = diffs[events]
    thr_deltas = diffs[events & (prev <= J + threshold_width)]
    m4_hat = float((np.abs(diffs) ** 4).mean(axis=0).max(initial=0.0))
    n = deltas.size
    if n == 0:
        return DriftReport(J, r, c1, 0, np.nan, np.nan, 0, np.nan, np.nan, m4_hat, INCONCLUSIVE)
    b_hat = float(deltas.mean())
    b_se = float(deltas.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    n_thr = thr_deltas.size
    b_thr = float(thr_deltas.mean()) if n_thr else np.nan
    b_thr_se = (
        float(thr_deltas.std(ddof=1) / np.sqrt(n_thr)) if n_thr > 1 else (0.0 if n_thr else np.nan)
    )
    verdict = PASS if b_hat <= -(r - c1) + 3.0 * b_se else FAIL
    return DriftReport(J, r, c1, n, b_hat, b_se, n_thr, b_thr, b_thr_se, m4_hat, verdict)


def _fourth_by_t(trajectories, stride, projection) -> np.ndarray:
    chains = excursion_chains(trajectories, stride, projection)
    lengths = {len(c) for c in chains}
    if len(lengths) != 1:
        raise ValueError("trajectories must share one horizon for per-step means")
    diffs = np.abs(np.diff(np.stack(chains), axis=1)) ** 4
    return diffs.mean(axis=0)


def fourth_difference_check(
    trajectories: list[Trajectory],
    r: float,
    bound_estimate: float,
    bound_stderr: float = 0.0,
    stride: int = 1,
    projection: np.ndarray | None = None,
) -> FourthDifferenceReport:
    """Largest per-step mean |xi_{t+1} - xi_t|^4, compared with the ceiling.

    ``bound_estimate`` should estimate E[(r + ||w||)^4] for the noise of
    the checked chain (see :func:`saturated_fourth_bound`); PASS means the
    empirical maximum stays below it plus three standard errors.
    """
    per_t = _fourth_by_t(trajectories, stride, projection)
    m4_hat = float(per_t.max(initial=0.0))
    verdict = PASS if m4_hat <= bound_estimate + 3.0 * bound_stderr else FAIL
    return FourthDifferenceReport(m4_hat, bound_estimate, bound_stderr, verdict)


def saturated_fourth_bound(norms: np.ndarray, r: float) -> tuple[float, float]:
    """Monte Carlo estimate (mean, stderr) of E[(r + ||w||)^4] from noise norms."""
    vals = (r + np.asarray(norms)) ** 4
    n = vals.size
    stderr = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(vals.mean()), stderr


def chain_noise_norms(
    noise: NoiseModel,
    n: int,
    stream: RngStream,
    k: int = 1,
    step_map: np.ndarray | None = None,
    propagator: np.ndarray | None = None,
) -> np.ndarray:
    """Norms of n draws of the effective per-cycle noise.

    For a k-cycle chain the effective disturbance is
    sum_{i=0..k-1} propagator^(k-1-i) (step_map @ w_i); ``step_map``
    projects one-step noise onto the chain's coordinates (identity when
    None) and ``propagator`` is the chain's one-step dynamics (identity
    when None). With k=1 this reduces to ||step_map @ w||.
    """
    draws = sample_block(noise, stream, np.arange(n * k, dtype=np.uint64))
    if step_map is not None:
        draws = draws @ step_map.T
    dim = draws.shape[1]
    draws = draws.reshape(n, k, dim)
    if k == 1 or propagator is None:
        agg = draws.sum(axis=1)
    else:
        agg = np.zeros((n, dim))
        for i in range(k):
            agg += draws[:, i] @ np.linalg.matrix_power(propagator, k - 1 - i).T
    return np.linalg.norm(agg, axis=1)


def boundedness_verdict(
    series: MomentSeries, growing_slope: float | None = None
) -> BoundednessReport:
    """Classify the moment series as BOUNDED or GROWING from its second-half
    slope and 3-sigma interval (per-run slopes over independent runs).

    BOUNDED requires the interval to contain zero (or lie entirely below
    it, as for a decaying noiseless series) and, when ``growing_slope`` is
    supplied, to exclude that reference slope. A horizon below 200 steps is
    INCONCLUSIVE.
    """
    lo, hi = series.slope_window
    if series.horizon < 200 or hi - lo < 2:
        return BoundednessReport(
            INCONCLUSIVE, series.slope_mean, np.nan, np.nan, series.slope_window
        )
    ci_lo = series.slope_mean - 3.0 * series.slope_se
    ci_hi = series.slope_mean + 3.0 * series.slope_se
    flat_or_decaying = ci_lo <= 0.0 <= ci_hi or ci_hi < 0.0
    excludes_ref = growing_slope is None or not (ci_lo <= growing_slope <= ci_hi)
    verdict = BOUNDED if (flat_or_decaying and excludes_ref) else GROWING
    return BoundednessReport(verdict, series.slope_mean, ci_lo, ci_hi, series.slope_window)


def noiseless_convergence_check(
    system: LinearSystem, policy: Policy, x0, zero_tol: float = 1e-12
) -> ConvergenceReport:
    """First time the circle block reaches (numerical) zero in the noiseless
    closed loop, verifying the controls vanish and the full state decays
    geometrically afterwards.

    Raises
    ------
    MsboundError
        If the circle block has not converged within
        k * (ceil(||x2_0|| / r) + 2) steps.
    """
    stride, projection = policy_chain_args(policy)
    x0 = np.asarray(x0, dtype=float)
    z0 = x0 if projection is None else projection @ x0
    if policy.variant is PolicyVariant.ZERO:
        z0 = np.zeros(0)
    if z0.size == 0 or np.linalg.norm(z0) <= zero_tol:
        budget = 0
    else:
        k = policy.k
        budget = k * (int(np.ceil(np.linalg.norm(z0) / policy.r)) + 2)

    extra = 600  # room to observe the contracting block's geometric decay
    horizon = max(budget + extra, 2)
    traj = simulate_trajectory(
        system, policy, zero_noise(system.d), horizon, RngStream(0, 0), x0
    )
    if policy.variant is PolicyVariant.ZERO or z0.size == 0:
        circle = np.zeros(horizon + 1)
    else:
        circle = np.linalg.norm(
            traj.states @ projection.T if projection is not None else traj.states, axis=1
        )
    below = np.flatnonzero(circle <= zero_tol)
    if below.size == 0 or below[0] > budget:
        raise MsboundError(
            f"circle block did not reach zero within the budget of {budget} steps"
        )
    steps = int(below[0])
    if np.any(circle[steps:] > zero_tol):
        raise MsboundError("circle block left zero after convergence")
    u_norms = np.linalg.norm(traj.controls[steps:], axis=1)
    max_u_after = float(u_norms.max(initial=0.0))
    if max_u_after > zero_tol:
        raise MsboundError(
            f"controls did not vanish after convergence (max {max_u_after:.3e})"
        )
    # geometric decay of the full state at the contracting block's rate;
    # the envelope allows the eigenbasis conditioning as transient headroom
    if policy.variant is PolicyVariant.GENERAL_COMPOSITE and policy.split.d1 > 0:
        block = policy.split.A11
    elif policy.variant is PolicyVariant.ZERO:
        block = system.A
    else:
        block = None
    norms = traj.state_norms()
    base = norms[steps]
    if block is not None and block.size:
        vals, vecs = np.linalg.eig(block)
        rho = float(np.max(np.abs(vals)))
        kappa = float(np.linalg.cond(vecs))
        if not np.isfinite(kappa):
            kappa = 1e12
    else:
        rho, kappa = 0.0, 1.0
    horizon_tail = np.arange(horizon + 1 - steps)
    envelope = kappa * base * (rho + 1e-9) ** horizon_tail + 10 * EPS_RESID * max(base, 1.0)
    if np.any(norms[steps:] > envelope + zero_tol):
        raise MsboundError("full state does not decay geometrically after convergence")
    return ConvergenceReport(
        steps=steps,
        circle_norm_at_steps=float(circle[steps]),
        max_control_after=max_u_after,
        final_state_norm=float(norms[-1]),
    )
