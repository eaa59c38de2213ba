"""Bounded control policies and their phase-machine evaluation.

Each synthesized policy saturates the relevant state block to a ball of
radius ``r`` and allocates the correction through a pseudoinverse, which
caps every emitted control at the authority ``R = r / sigma_d``. Policies
with cycle length ``k > 1`` recompute a full k-step control block whenever
the phase wraps, from the state observed at that cycle boundary; the
intermediate states do not influence the controls, which is the k-history
structure the guarantees rely on.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    HypothesisViolationError,
    InsufficientAuthorityError,
    NotStabilizableError,
    PhaseContractError,
    RankDeficientError,
)
from .linalg import (
    EPS_RECON,
    SpectralSplit,
    StabilityTag,
    as_matrix,
    min_singular_value,
    reachability_index,
    reachability_matrix,
    saturate,
    spectral_split,
)
from .system import LinearSystem

__all__ = [
    "PolicyVariant",
    "Policy",
    "PolicyState",
    "SynthesisReport",
    "synth_random_walk",
    "synth_orthogonal_stationary",
    "synth_subsampled",
    "synth_general",
    "zero_policy",
    "scale_authority",
    "initial_state",
    "policy_step",
    "control_bound",
]


class PolicyVariant(Enum):
    ZERO = "zero"
    RANDOM_WALK_SAT = "random_walk_sat"
    ORTHOGONAL_STATIONARY = "orthogonal_stationary"
    SUBSAMPLED = "subsampled"
    GENERAL_COMPOSITE = "general_composite"


@dataclass(frozen=True)
class Policy:
    """Immutable synthesized policy.

    ``r`` is the saturation radius, ``authority`` the uniform bound on
    every emitted control norm, ``k`` the cycle length (1 for stationary
    variants). ``gain``, ``rk_pinv``, ``abar`` and ``split`` are the
    precomputed matrices each variant needs; unused ones are ``None``.
    """

    variant: PolicyVariant
    r: float
    authority: float
    k: int
    m: int | None = None
    gain: np.ndarray | None = None
    rk_pinv: np.ndarray | None = None
    abar: np.ndarray | None = None
    split: SpectralSplit | None = None


@dataclass
class PolicyState:
    """Per-trajectory mutable evaluation state (owned by one run at a time)."""

    phase: int = 0
    boundary_state: np.ndarray | None = None
    control_block: np.ndarray | None = None


@dataclass(frozen=True)
class SynthesisReport:
    """Summary of a synthesis run: radius, allocation geometry, authority.

    For any saturating policy the radius must exceed the enforced noise
    bound ``c1_estimate``; the zero policy (R = 0) carries no margin.
    """

    r: float
    sigma_d: float
    R: float
    k: int
    c1_estimate: float
    cond_T: float

    def __post_init__(self):
        if self.R > 0 and not self.r > self.c1_estimate:
            raise ValueError(
                f"saturation radius {self.r} must exceed the noise bound {self.c1_estimate}"
            )

    def to_dict(self) -> dict:
        def scrub(x):
            return x if isinstance(x, int) or np.isfinite(x) else None

        return {
            "r": scrub(self.r),
            "sigma_d": scrub(self.sigma_d),
            "R": scrub(self.R),
            "k": self.k,
            "c1_estimate": scrub(self.c1_estimate),
            "cond_T": scrub(self.cond_T),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _require_margin(r: float, c1: float) -> None:
    if not r > c1:
        raise InsufficientAuthorityError(
            f"saturation radius r={r} must exceed the noise first-moment bound C1={c1}"
        )


def zero_policy(m: int) -> Policy:
    """No-control policy: u = 0, authority 0."""
    return Policy(PolicyVariant.ZERO, r=0.0, authority=0.0, k=1, m=m)


def synth_random_walk(r: float, c1: float) -> Policy:
    """Stationary policy u = -sat_r(x) for integrator dynamics x' = x + u + w."""
    _require_margin(r, c1)
    return Policy(PolicyVariant.RANDOM_WALK_SAT, r=float(r), authority=float(r), k=1)


def synth_orthogonal_stationary(A, B, r: float, c1: float) -> Policy:
    """Stationary policy u = -B^{-1} A sat_r(x) for orthogonal A, square full-rank B.

    Authority is r / sigma_min(B).
    """
    a = as_matrix(A, "A")
    b = as_matrix(B, "B")
    d = a.shape[0]
    if np.linalg.norm(a @ a.T - np.eye(d)) > EPS_RECON:
        raise HypothesisViolationError("A is not orthogonal")
    if b.shape != (d, d):
        raise ValueError(f"B must be {d}x{d}, got {b.shape}")
    sigma = min_singular_value(b)
    if sigma == 0.0:
        raise RankDeficientError("B is numerically rank-deficient")
    _require_margin(r, c1)
    gain = np.linalg.solve(b, a)
    return Policy(
        PolicyVariant.ORTHOGONAL_STATIONARY,
        r=float(r),
        authority=float(r) / sigma,
        k=1,
        m=d,
        gain=gain,
    )


def synth_subsampled(A, B, r: float, c1: float) -> Policy:
    """k-cycle policy for orthogonal A: at each cycle boundary, allocate the
    block of k controls that cancels the boundary state's saturated part
    over the next k steps.

    The allocation stacks [u_{last}; ...; u_{first}], so emission at phase
    ``i`` reads block segment ``k - 1 - i``. Authority is
    r / sigma_min of the k-step reachability matrix.
    """
    a = as_matrix(A, "A")
    b = as_matrix(B, "B")
    d = a.shape[0]
    if np.linalg.norm(a @ a.T - np.eye(d)) > EPS_RECON:
        raise HypothesisViolationError("A is not orthogonal")
    k = reachability_index(a, b)
    if k is None:
        raise NotStabilizableError("(A, B) is not reachable within the state dimension")
    _require_margin(r, c1)
    rk = reachability_matrix(a, b, k)
    sigma = min_singular_value(rk)
    return Policy(
        PolicyVariant.SUBSAMPLED,
        r=float(r),
        authority=float(r) / sigma,
        k=k,
        m=b.shape[1],
        rk_pinv=np.linalg.pinv(rk),
        abar=np.linalg.matrix_power(a, k),
    )


def synth_general(system: LinearSystem, r: float, c1: float) -> Policy:
    """Policy for a marginally stable stabilizable pair.

    A Schur-stable system needs no control and gets the zero policy.
    Otherwise the dynamics are split into (contracting, circle) blocks and
    the k-cycle allocation runs on the circle block; the contracting block
    is left in open loop. The margin check uses the circle-block noise
    bound ``||P2 T^{-1}||_2 * c1`` (operator-norm pushforward of the full
    noise bound, conservative).
    """
    if system.stability.tag is StabilityTag.UNSTABLE:
        raise HypothesisViolationError("A has an eigenvalue outside the closed unit disk")
    if system.stability.tag is StabilityTag.SCHUR_STABLE:
        return zero_policy(system.m)
    split = spectral_split(system.A, system.B)
    c1_circle = float(np.linalg.norm(split.T_inv[split.d1 :], 2)) * c1
    _require_margin(r, c1_circle)
    rk = reachability_matrix(split.A22, split.B2, split.k)
    return Policy(
        PolicyVariant.GENERAL_COMPOSITE,
        r=float(r),
        authority=float(r) / split.sigma_d,
        k=split.k,
        m=system.m,
        rk_pinv=np.linalg.pinv(rk),
        abar=np.linalg.matrix_power(split.A22, split.k),
        split=split,
    )


def scale_authority(policy: Policy, factor: float) -> Policy:
    """Policy with the saturation radius (hence authority) scaled by ``factor``.

    Bypasses the noise-margin check on purpose: reduced-authority variants
    are for side-by-side comparison runs, not for guaranteed synthesis.
    ``factor == 0`` yields the zero policy.
    """
    if factor < 0:
        raise ValueError("authority scale must be nonnegative")
    if factor == 0.0:
        return zero_policy(policy.m if policy.m is not None else 1)
    return dataclasses.replace(
        policy, r=policy.r * factor, authority=policy.authority * factor
    )


def initial_state(policy: Policy) -> PolicyState:
    return PolicyState(phase=0, boundary_state=None, control_block=None)


def _compute_block(policy: Policy, boundary: np.ndarray) -> np.ndarray:
    """Controls for one cycle, reordered so row i is the control at phase i."""
    target = policy.abar @ saturate(boundary, policy.r)
    stacked = -(policy.rk_pinv @ target)
    k, m = policy.k, stacked.shape[0] // policy.k
    blocks = stacked.reshape(k, m)
    return blocks[::-1]


def policy_step(
    policy: Policy, state: PolicyState, x, t: int
) -> tuple[np.ndarray, PolicyState]:
    """Evaluate the policy at time ``t`` and advance the phase machine.

    ``t mod k`` must equal the state's phase. Stationary variants return
    the same state object; cyclic variants recompute their control block
    exactly when the phase is 0.
    """
    x = np.asarray(x, dtype=float)
    if t % policy.k != state.phase:
        raise PhaseContractError(
            f"time {t} is at phase {t % policy.k}, state says {state.phase}"
        )
    v = policy.variant
    if v is PolicyVariant.ZERO:
        return np.zeros(policy.m), state
    if v is PolicyVariant.RANDOM_WALK_SAT:
        return -saturate(x, policy.r), state
    if v is PolicyVariant.ORTHOGONAL_STATIONARY:
        return -(policy.gain @ saturate(x, policy.r)), state
    if v is PolicyVariant.SUBSAMPLED:
        boundary = x
    elif v is PolicyVariant.GENERAL_COMPOSITE:
        boundary = policy.split.circle_coords(x)
    else:  # pragma: no cover
        raise AssertionError(f"unhandled variant {v}")
    if state.phase == 0:
        block = _compute_block(policy, boundary)
        new_state = PolicyState(phase=1 % policy.k, boundary_state=boundary, control_block=block)
        return block[0].copy(), new_state
    u = state.control_block[state.phase].copy()
    new_state = PolicyState(
        phase=(state.phase + 1) % policy.k,
        boundary_state=state.boundary_state,
        control_block=state.control_block,
    )
    return u, new_state


def control_bound(policy: Policy) -> float:
    """Uniform bound on the norm of every control the policy can emit."""
    return policy.authority
