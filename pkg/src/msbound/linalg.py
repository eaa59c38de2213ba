"""Saturation geometry, pseudoinverse allocation, reachability, and the
stable/orthogonal spectral split of a marginally stable transition matrix.

All operations are pure functions of their numpy inputs. Tolerances are
module constants sized for double precision at state dimensions up to ~16:

- ``EPS_UNIT``   unit-circle membership of eigenvalues
- ``EPS_RANK``   relative singular-value threshold for rank decisions
- ``EPS_RECON``  Frobenius tolerance for split reconstruction / orthogonality
- ``EPS_RESID``  residual tolerance for linear solves
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import (
    HypothesisViolationError,
    NotStabilizableError,
    NumericalFailureError,
    RankDeficientError,
)

__all__ = [
    "EPS_UNIT",
    "EPS_RANK",
    "EPS_RECON",
    "EPS_RESID",
    "StabilityTag",
    "StabilityClass",
    "SpectralSplit",
    "as_matrix",
    "as_vector",
    "saturate",
    "min_singular_value",
    "pinv_apply",
    "reachability_matrix",
    "reachability_index",
    "classify_stability",
    "spectral_split",
]

EPS_UNIT = 1e-9
EPS_RANK = 1e-10
EPS_RECON = 1e-8
EPS_RESID = 1e-10

# Eigenvalues closer than this (complex absolute distance) are treated as one
# cluster when counting multiplicities; exact arithmetic needs no such knob,
# floating point does.
EIG_CLUSTER_TOL = 1e-7


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a 2-d float array with finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"{name} must be a nonempty 2-d array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Validate and return ``v`` as a 1-d float array with finite entries."""
    x = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


class StabilityTag(Enum):
    SCHUR_STABLE = "schur_stable"
    MARGINALLY_STABLE = "marginally_stable"
    UNSTABLE = "unstable"
    DEFECTIVE_ON_CIRCLE = "defective_on_circle"


@dataclass(frozen=True)
class StabilityClass:
    """Spectral classification of a square matrix.

    ``unit_circle_dim`` counts eigenvalues with unit modulus, with
    multiplicity. ``SCHUR_STABLE`` implies ``unit_circle_dim == 0``.
    """

    tag: StabilityTag
    unit_circle_dim: int


@dataclass(frozen=True)
class SpectralSplit:
    """Change of basis separating contracting modes from unit-circle modes.

    ``T`` maps split coordinates to original coordinates; its leading ``d1``
    columns span the invariant subspace of the strictly contracting modes and
    the trailing ``d2`` columns span the unit-circle invariant subspace, built
    from real/imaginary eigenvector pairs so that ``A22`` is exactly
    block-diagonal with +-1 entries and 2x2 rotation blocks (hence orthogonal).

    ``k`` is the reachability index of ``(A22, B2)`` and ``sigma_d`` the
    smallest singular value of its k-step reachability matrix.
    """

    T: np.ndarray
    T_inv: np.ndarray
    A11: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    k: int
    sigma_d: float
    cond_T: float

    @property
    def d1(self) -> int:
        return self.A11.shape[0]

    @property
    def d2(self) -> int:
        return self.A22.shape[0]

    def circle_coords(self, x: np.ndarray) -> np.ndarray:
        """Project a state (original coordinates) onto the circle block."""
        return (self.T_inv @ x)[self.d1 :]

    def stable_coords(self, x: np.ndarray) -> np.ndarray:
        return (self.T_inv @ x)[: self.d1]


def saturate(v, r: float) -> np.ndarray:
    """Radial projection of ``v`` onto the closed Euclidean ball of radius ``r``.

    Returns ``v`` unchanged when ``||v|| <= r`` and ``r * v / ||v||``
    otherwise. This is not the component-wise clip: the direction of ``v``
    is always preserved, which is what makes the map commute with
    orthogonal transformations.
    """
    if not r > 0:
        raise ValueError(f"saturation radius must be positive, got {r}")
    x = as_vector(v)
    n = float(np.linalg.norm(x))
    if n <= r:
        return x
    return (r / n) * x


def min_singular_value(M) -> float:
    """Smallest singular value of ``M``; exact 0.0 when numerically rank-deficient.

    Rank deficiency means the smallest singular value is at most
    ``EPS_RANK`` times the largest.
    """
    m = as_matrix(M)
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= EPS_RANK * s[0]:
        return 0.0
    return float(s[-1])


def pinv_apply(M, v) -> np.ndarray:
    """Least-norm solution ``u = pinv(M) @ v`` for a flat full-row-rank ``M``.

    For ``M`` of shape (d, n) with ``n >= d`` and full row rank this gives
    the exact solution ``M @ u == v`` with ``||u|| <= ||v|| / sigma_min(M)``.

    Raises
    ------
    RankDeficientError
        If the smallest singular value is below ``EPS_RANK`` times the
        largest (no exact solution is guaranteed then).
    """
    m = as_matrix(M)
    x = as_vector(v)
    d, n = m.shape
    if n < d:
        raise ValueError(f"matrix must be flat (cols >= rows), got {m.shape}")
    if x.shape[0] != d:
        raise ValueError(f"vector length {x.shape[0]} != row count {d}")
    u_svd, s, vt = np.linalg.svd(m, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= EPS_RANK * s[0]:
        raise RankDeficientError(
            f"matrix is numerically rank-deficient (sigma_min={s[-1]:.3e}, sigma_max={s[0]:.3e})"
        )
    return vt.T @ ((u_svd.T @ x) / s)


def reachability_matrix(A, B, k: int) -> np.ndarray:
    """k-step reachability matrix ``[B | AB | ... | A^(k-1) B]``."""
    a = as_matrix(A, "A")
    b = as_matrix(B, "B")
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError(f"A must be square, got {a.shape}")
    if b.shape[0] != d:
        raise ValueError(f"B has {b.shape[0]} rows, expected {d}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    blocks = []
    cur = b
    for _ in range(k):
        blocks.append(cur)
        cur = a @ cur
    return np.hstack(blocks)


def reachability_index(A, B) -> int | None:
    """Smallest ``k <= d`` with full-row-rank k-step reachability matrix.

    Returns ``None`` when the pair is not reachable in ``d`` steps. Rank is
    decided by the relative singular-value threshold ``EPS_RANK``.
    """
    a = as_matrix(A, "A")
    b = as_matrix(B, "B")
    d = a.shape[0]
    blocks = []
    cur = b
    for k in range(1, d + 1):
        blocks.append(cur)
        s = np.linalg.svd(np.hstack(blocks), compute_uv=False)
        # full row rank: at least d singular values, smallest above threshold
        if len(s) >= d and s[0] > 0.0 and s[d - 1] > EPS_RANK * s[0]:
            return k
        cur = a @ cur
    return None


def _eig(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigen-decomposition failed: {exc}") from exc


def _clusters(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Connected components of eigenvalues under |a - b| <= tol (single linkage)."""
    n = values.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                pi, pj = find(i), find(j)
                if pi != pj:
                    parent[pi] = pj
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(idx) for idx in groups.values()]


def classify_stability(A) -> StabilityClass:
    """Classify the spectrum of ``A`` relative to the closed unit disk.

    Unit-circle membership uses ``EPS_UNIT``; a unit-circle eigenvalue
    cluster whose geometric multiplicity (dimension of the nullspace of
    ``A - lambda I`` by numerical rank) falls short of its algebraic
    multiplicity yields ``DEFECTIVE_ON_CIRCLE``.
    """
    a = as_matrix(A, "A")
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError(f"A must be square, got {a.shape}")
    eigvals, _ = _eig(a)
    mods = np.abs(eigvals)
    if np.any(mods > 1.0 + EPS_UNIT):
        return StabilityClass(StabilityTag.UNSTABLE, 0)
    on_circle = np.abs(mods - 1.0) <= EPS_UNIT
    unit_dim = int(np.count_nonzero(on_circle))
    if unit_dim == 0:
        return StabilityClass(StabilityTag.SCHUR_STABLE, 0)
    circle_vals = eigvals[on_circle]
    for idx in _clusters(circle_vals, EIG_CLUSTER_TOL):
        lam = complex(np.mean(circle_vals[idx]))
        algebraic = len(idx)
        if algebraic == 1:
            continue
        shifted = a.astype(complex) - lam * np.eye(d)
        s = np.linalg.svd(shifted, compute_uv=False)
        rank = int(np.count_nonzero(s > EPS_RANK * max(s[0], 1.0)))
        geometric = d - rank
        if geometric < algebraic:
            return StabilityClass(StabilityTag.DEFECTIVE_ON_CIRCLE, unit_dim)
    return StabilityClass(StabilityTag.MARGINALLY_STABLE, unit_dim)


def _stable_subspace_basis(a: np.ndarray, d1: int) -> np.ndarray:
    """Orthonormal basis of the invariant subspace of |lambda| < 1 modes.

    An ordered real Schur form is used here (rather than raw eigenvectors)
    so that contracting modes may be defective; only the unit-circle modes
    are required to be semisimple.
    """
    if d1 == 0:
        return np.zeros((a.shape[0], 0))

    def inside(re, im):
        return np.hypot(re, im) < 1.0 - EPS_UNIT

    try:
        _, z, sdim = scipy.linalg.schur(a, output="real", sort=inside)
    except Exception as exc:  # pragma: no cover - LAPACK reordering failure
        raise NumericalFailureError(f"Schur reordering failed: {exc}") from exc
    if sdim != d1:
        raise NumericalFailureError(
            f"Schur sort found {sdim} contracting modes, classification found {d1}"
        )
    return z[:, :d1]


def _circle_basis(a: np.ndarray, eigvals: np.ndarray, eigvecs: np.ndarray) -> tuple:
    """Real basis columns of the unit-circle invariant subspace plus the
    exactly-orthogonal block they induce.

    Real unit eigenvalues contribute one normalized real column and a +-1
    diagonal entry. A complex pair exp(+-i phi) contributes the ordered
    column pair (Im v, Re v) scaled to ||v||^2 = 2, which represents the
    restriction of ``A`` exactly as the rotation [[c, -s], [s, c]],
    regardless of the eigenvector's complex phase. The phase itself (an
    in-plane rotation of the basis pair) is fixed later by gauge alignment.
    """
    mods = np.abs(eigvals)
    on_circle = np.abs(mods - 1.0) <= EPS_UNIT
    real_idx = [i for i in np.flatnonzero(on_circle) if eigvals[i].imag == 0.0]
    pair_idx = [i for i in np.flatnonzero(on_circle) if eigvals[i].imag > 0.0]
    # order: +1 modes, rotation pairs by increasing angle, then -1 modes
    real_idx.sort(key=lambda i: (0.0 if eigvals[i].real > 0 else np.pi, i))
    pair_idx.sort(key=lambda i: (abs(np.angle(eigvals[i])), i))

    columns: list[np.ndarray] = []
    blocks: list[np.ndarray] = []
    pair_slots: list[int] = []  # column offset of each rotation pair
    plus_real = [i for i in real_idx if eigvals[i].real > 0]
    minus_real = [i for i in real_idx if eigvals[i].real <= 0]

    def add_real(indices, sign):
        for i in indices:
            v = eigvecs[:, i]
            # rotate the returned complex vector onto the real axis
            j = int(np.argmax(np.abs(v)))
            v = v * np.exp(-1j * np.angle(v[j]))
            col = np.real(v)
            col = col / np.linalg.norm(col)
            if col[int(np.argmax(np.abs(col)))] < 0:
                col = -col
            columns.append(col)
            blocks.append(np.array([[sign]], dtype=float))

    add_real(plus_real, 1.0)
    for i in pair_idx:
        lam = eigvals[i] / abs(eigvals[i])
        c, s = lam.real, lam.imag
        v = eigvecs[:, i]
        v = v * (np.sqrt(2.0) / np.linalg.norm(v))
        pair_slots.append(len(columns))
        columns.append(np.imag(v))
        columns.append(np.real(v))
        blocks.append(np.array([[c, -s], [s, c]]))
    add_real(minus_real, -1.0)

    basis = np.column_stack(columns) if columns else np.zeros((a.shape[0], 0))
    a22 = scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))
    return basis, a22, pair_slots


def _align_pair_gauges(
    t_mat: np.ndarray, d1: int, pair_slots: list[int], b: np.ndarray
) -> np.ndarray:
    """Rotate each complex-pair basis in-plane so the first input column of
    ``B`` with a significant component in that plane lands on the pair's
    first coordinate axis.

    In-plane rotations leave the induced rotation block and the reachability
    singular values unchanged; fixing them removes the arbitrary complex
    phase of the eigensolver's output, so the split is a deterministic
    function of (A, B).
    """
    if not pair_slots:
        return t_mat
    t_new = t_mat.copy()
    coords = np.linalg.solve(t_mat, np.hstack([b, np.eye(t_mat.shape[0])]))
    for slot in pair_slots:
        rows = coords[d1 + slot : d1 + slot + 2]
        angle = None
        for col in range(rows.shape[1]):
            beta = rows[:, col]
            scale = max(np.linalg.norm(coords[:, col]), 1.0)
            if np.linalg.norm(beta) > 1e-9 * scale:
                angle = np.arctan2(beta[1], beta[0])
                break
        if angle is None:
            continue
        c, s = np.cos(angle), np.sin(angle)
        gauge = np.array([[c, -s], [s, c]])
        t_new[:, d1 + slot : d1 + slot + 2] = t_mat[:, d1 + slot : d1 + slot + 2] @ gauge
    return t_new


def spectral_split(A, B) -> SpectralSplit:
    """Split ``(A, B)`` into a contracting block and an orthogonal circle block.

    The returned basis ``T`` orders blocks (stable, circle). ``A22`` is
    built directly from the unit-circle eigenvalues, so it is orthogonal by
    construction; the reconstruction residual is validated against
    ``EPS_RECON`` instead.

    Raises
    ------
    HypothesisViolationError
        If ``A`` has an eigenvalue outside the closed unit disk or a
        defective unit-circle eigenvalue.
    NotStabilizableError
        If the circle pair ``(A22, B2)`` is not reachable within its
        dimension.
    """
    a = as_matrix(A, "A")
    b = as_matrix(B, "B")
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError(f"A must be square, got {a.shape}")
    if b.shape[0] != d:
        raise ValueError(f"B has {b.shape[0]} rows, expected {d}")

    stability = classify_stability(a)
    if stability.tag is StabilityTag.UNSTABLE:
        raise HypothesisViolationError("A has an eigenvalue outside the closed unit disk")
    if stability.tag is StabilityTag.DEFECTIVE_ON_CIRCLE:
        raise HypothesisViolationError(
            "a unit-modulus eigenvalue of A is defective (geometric < algebraic multiplicity)"
        )

    d2 = stability.unit_circle_dim
    d1 = d - d2
    if d2 == 0:
        return SpectralSplit(
            T=np.eye(d),
            T_inv=np.eye(d),
            A11=a.copy(),
            A22=np.zeros((0, 0)),
            B1=b.copy(),
            B2=np.zeros((0, b.shape[1])),
            k=0,
            sigma_d=np.inf,
            cond_T=1.0,
        )

    eigvals, eigvecs = _eig(a)
    z1 = _stable_subspace_basis(a, d1)
    circle_cols, a22, pair_slots = _circle_basis(a, eigvals, eigvecs)
    if circle_cols.shape[1] != d2:
        raise NumericalFailureError(
            f"circle basis has {circle_cols.shape[1]} columns, expected {d2}"
        )
    t_mat = np.hstack([z1, circle_cols])
    t_mat = _align_pair_gauges(t_mat, d1, pair_slots, b)

    cond_t = float(np.linalg.cond(t_mat))
    if not np.isfinite(cond_t):
        raise NumericalFailureError("change-of-basis matrix is numerically singular")
    if cond_t > 1e8:
        warnings.warn(
            f"ill-conditioned change of basis: cond(T) = {cond_t:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    t_inv = np.linalg.inv(t_mat)

    a11 = z1.T @ a @ z1 if d1 else np.zeros((0, 0))
    b_split = t_inv @ b
    b1, b2 = b_split[:d1], b_split[d1:]

    recon = t_mat @ scipy.linalg.block_diag(a11, a22) @ t_inv
    recon_err = np.linalg.norm(recon - a)
    if recon_err > EPS_RECON * (1.0 + np.linalg.norm(a)):
        raise NumericalFailureError(
            f"split reconstruction residual {recon_err:.3e} exceeds tolerance"
        )
    orth_err = np.linalg.norm(a22 @ a22.T - np.eye(d2))
    if orth_err > EPS_RECON:
        raise NumericalFailureError(f"circle block not orthogonal: residual {orth_err:.3e}")

    k = reachability_index(a22, b2)
    if k is None:
        raise NotStabilizableError(
            "unit-circle subsystem is not reachable within its dimension"
        )
    sigma = min_singular_value(reachability_matrix(a22, b2, k))
    return SpectralSplit(
        T=t_mat,
        T_inv=t_inv,
        A11=a11,
        A22=a22,
        B1=b1,
        B2=b2,
        k=k,
        sigma_d=sigma,
        cond_T=cond_t,
    )
