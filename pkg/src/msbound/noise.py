"""Seeded random-vector models with analytic moment metadata.

Models are immutable value objects; every draw is addressed by
``(master_seed, run, t, draw index)`` through the counter-based stream in
:mod:`msbound.philox`, so simulations are bit-reproducible under any
parallel schedule. All models are symmetric about zero. The heavy-tailed
models (``cauchy``, ``student_t`` with ``dof <= 4``) are included
deliberately as moment-violating counterexamples and are flagged as such
rather than rejected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln, ndtri, stdtrit

from .linalg import as_matrix
from .philox import block_uniforms

__all__ = [
    "NoiseModel",
    "MomentBounds",
    "RngStream",
    "gaussian_iid",
    "gaussian_scheduled",
    "uniform_ball",
    "laplace_iid",
    "student_t_iid",
    "cauchy_iid",
    "zero_noise",
    "sample",
    "moment_bounds",
    "exact_first_moment",
    "estimate_c1",
]

KINDS = (
    "gaussian_iid",
    "gaussian_scheduled",
    "uniform_ball",
    "laplace",
    "student_t",
    "cauchy",
    "zero",
)


@dataclass(frozen=True)
class MomentBounds:
    """Bounds on the first and fourth moments of the noise norm.

    ``c1`` bounds sup_t E||w_t|| and ``c4`` bounds sup_t E||w_t||^4;
    ``c4 = inf`` marks a moment-violating model. ``exact`` records whether
    ``c1`` is the exact expectation or only an upper bound.
    """

    c1: float
    c4: float
    exact: bool

    @property
    def violates_moments(self) -> bool:
        return not math.isfinite(self.c4)


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream: a (master_seed, run) pair.

    ``sample(model, stream, t)`` depends only on (master_seed, run, t), so
    distinct runs and steps own disjoint counter blocks by construction.
    """

    master_seed: int
    run: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**128:
            raise ValueError("master_seed must fit in 128 bits")
        if not 0 <= self.run < 2**64:
            raise ValueError("run index must fit in 64 bits")

    @property
    def key(self) -> np.ndarray:
        return np.array(
            [self.master_seed & 0xFFFFFFFFFFFFFFFF, self.master_seed >> 64],
            dtype=np.uint64,
        )

    def for_run(self, run: int) -> "RngStream":
        return RngStream(self.master_seed, run)

    def uniforms(self, t_indices, draws_per_step: int) -> np.ndarray:
        return block_uniforms(self.key, self.run, t_indices, draws_per_step)


def _chi_mean(d: int, scale: float = 1.0) -> float:
    """E||w|| for w ~ N(0, scale^2 I_d)."""
    return scale * math.sqrt(2.0) * math.exp(gammaln((d + 1) / 2) - gammaln(d / 2))


@dataclass(frozen=True)
class NoiseModel:
    """Distribution spec for the additive disturbance sequence.

    ``params`` are kind-specific; ``schedule`` (Cholesky factors, one per
    period position) is precomputed for scheduled Gaussians.
    """

    kind: str
    d: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}, expected one of {KINDS}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    @cached_property
    def _factors(self) -> list[np.ndarray]:
        """Square-root factors of the covariance schedule (Gaussian kinds).

        Eigenvalue-based factors so that positive semidefinite (possibly
        singular) covariances are accepted.
        """
        covs = self.params.get("covariances")
        if covs is None:
            covs = [self.params["covariance"]]
        out = []
        for q in covs:
            qm = as_matrix(q, "covariance")
            if qm.shape != (self.d, self.d):
                raise ValueError(f"covariance must be {self.d}x{self.d}, got {qm.shape}")
            if not np.allclose(qm, qm.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
            vals, vecs = np.linalg.eigh(qm)
            if vals.min() < -1e-12 * max(vals.max(), 1.0):
                raise ValueError("covariance must be positive semidefinite")
            out.append(vecs * np.sqrt(np.clip(vals, 0.0, None)))
        return out

    @property
    def draws_per_step(self) -> int:
        if self.kind == "zero":
            return 0
        if self.kind == "uniform_ball":
            return self.d + 1
        return self.d


def gaussian_iid(covariance) -> NoiseModel:
    q = as_matrix(covariance, "covariance")
    return NoiseModel("gaussian_iid", q.shape[0], {"covariance": q})


def gaussian_scheduled(covariances) -> NoiseModel:
    """Periodic covariance schedule Q_t = covariances[t mod period]."""
    covs = [as_matrix(q, "covariance") for q in covariances]
    if not covs:
        raise ValueError("schedule must contain at least one covariance")
    return NoiseModel("gaussian_scheduled", covs[0].shape[0], {"covariances": covs})


def uniform_ball(d: int, radius: float = 1.0) -> NoiseModel:
    if radius <= 0:
        raise ValueError("radius must be positive")
    return NoiseModel("uniform_ball", d, {"radius": float(radius)})


def laplace_iid(d: int, scale: float = 1.0) -> NoiseModel:
    if scale <= 0:
        raise ValueError("scale must be positive")
    return NoiseModel("laplace", d, {"scale": float(scale)})


def student_t_iid(d: int, dof: float, scale: float = 1.0) -> NoiseModel:
    if dof <= 0 or scale <= 0:
        raise ValueError("dof and scale must be positive")
    return NoiseModel("student_t", d, {"dof": float(dof), "scale": float(scale)})


def cauchy_iid(d: int, scale: float = 1.0) -> NoiseModel:
    if scale <= 0:
        raise ValueError("scale must be positive")
    return NoiseModel("cauchy", d, {"scale": float(scale)})


def zero_noise(d: int) -> NoiseModel:
    return NoiseModel("zero", d)


def _transform(model: NoiseModel, u: np.ndarray, t_indices: np.ndarray) -> np.ndarray:
    """Map uniforms of shape (n, draws_per_step) to noise vectors (n, d)."""
    kind = model.kind
    if kind == "zero":
        return np.zeros((len(t_indices), model.d))
    if kind in ("gaussian_iid", "gaussian_scheduled"):
        z = ndtri(u)
        factors = model._factors
        if len(factors) == 1:
            return z @ factors[0].T
        period = len(factors)
        out = np.empty_like(z)
        phase = np.asarray(t_indices) % period
        for p in range(period):
            mask = phase == p
            if np.any(mask):
                out[mask] = z[mask] @ factors[p].T
        return out
    if kind == "uniform_ball":
        z = ndtri(u[:, : model.d])
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        radii = model.params["radius"] * u[:, model.d :] ** (1.0 / model.d)
        return (z / norms) * radii
    if kind == "laplace":
        b = model.params["scale"]
        return b * np.sign(u - 0.5) * np.log1p(-2.0 * np.abs(u - 0.5)) * -1.0
    if kind == "student_t":
        return model.params["scale"] * stdtrit(model.params["dof"], u)
    if kind == "cauchy":
        return model.params["scale"] * np.tan(np.pi * (u - 0.5))
    raise AssertionError(f"unhandled kind {kind}")


def sample(model: NoiseModel, stream: RngStream, t: int) -> np.ndarray:
    """One noise vector at step ``t``: a pure function of (seed, run, t)."""
    return sample_block(model, stream, np.array([t]))[0]


def sample_block(model: NoiseModel, stream: RngStream, t_indices) -> np.ndarray:
    """Noise vectors for many steps at once; row i is ``sample(..., t_indices[i])``."""
    t_indices = np.asarray(t_indices, dtype=np.uint64)
    if model.kind == "zero":
        return np.zeros((len(t_indices), model.d))
    u = stream.uniforms(t_indices, model.draws_per_step)
    return _transform(model, u, t_indices)


def moment_bounds(model: NoiseModel) -> MomentBounds:
    """Analytic moment bounds for the model.

    ``c1`` uses the Jensen bound sqrt(E||w||^2) where the exact norm mean
    has no closed form (Gaussian: sqrt(trace Q); uniform ball: the radius).
    ``c4`` is exact for Gaussian norms ((tr Q)^2 + 2 tr(Q^2)) and for the
    other light-tailed kinds via coordinate moments. Cauchy and Student-t
    with dof <= 4 report an infinite fourth moment and are thereby flagged
    moment-violating.
    """
    kind, d = model.kind, model.d
    if kind == "zero":
        return MomentBounds(0.0, 0.0, True)
    if kind in ("gaussian_iid", "gaussian_scheduled"):
        covs = model.params.get("covariances") or [model.params["covariance"]]
        c1_vals, c4_vals = [], []
        for q in covs:
            tr = float(np.trace(q))
            c1_vals.append(math.sqrt(tr))
            c4_vals.append(tr * tr + 2.0 * float(np.trace(q @ q)))
        return MomentBounds(max(c1_vals), max(c4_vals), True)
    if kind == "uniform_ball":
        rho = model.params["radius"]
        return MomentBounds(rho, rho**4, True)
    if kind == "laplace":
        b = model.params["scale"]
        if d == 1:
            return MomentBounds(b, 24.0 * b**4, True)
        # per coordinate: E x^2 = 2 b^2, E x^4 = 24 b^4
        return MomentBounds(b * math.sqrt(2.0 * d), 4.0 * b**4 * d * (d + 5), True)
    if kind == "student_t":
        nu, s = model.params["dof"], model.params["scale"]
        if nu <= 4:
            return MomentBounds(math.inf, math.inf, False)
        v2 = nu / (nu - 2.0)
        v4 = 3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0))
        c4 = s**4 * (d * v4 + d * (d - 1) * v2 * v2)
        return MomentBounds(s * math.sqrt(d * v2), c4, True)
    if kind == "cauchy":
        return MomentBounds(math.inf, math.inf, False)
    raise AssertionError(f"unhandled kind {kind}")


def exact_first_moment(model: NoiseModel) -> float | None:
    """Closed-form E||w|| where one exists, else None.

    Isotropic Gaussian: the chi-distribution mean. Uniform ball of radius
    rho in dimension d: rho * d / (d + 1). Scalar Laplace: the scale.
    Moment-violating models return inf.
    """
    kind, d = model.kind, model.d
    if kind == "zero":
        return 0.0
    if kind == "gaussian_iid":
        q = np.asarray(model.params["covariance"])
        iso = q[0, 0]
        if iso > 0 and np.allclose(q, iso * np.eye(d), atol=1e-14):
            return _chi_mean(d, math.sqrt(iso))
        return None
    if kind == "uniform_ball":
        return model.params["radius"] * d / (d + 1)
    if kind == "laplace" and d == 1:
        return model.params["scale"]
    if kind == "cauchy" or (kind == "student_t" and model.params["dof"] <= 1):
        return math.inf
    return None


def estimate_c1(model: NoiseModel, n: int, stream: RngStream) -> tuple[float, float]:
    """Empirical mean of ||w|| over ``n`` draws, with its standard error.

    Draws use the stream's counter blocks at steps 0..n-1, so the estimate
    is reproducible per (master_seed, run). For moment-violating models the
    estimate is returned as-is; it does not converge and the model's
    ``violates_moments`` flag is the authoritative signal.
    """
    if n < 1000:
        raise ValueError("need at least 1000 samples for a meaningful estimate")
    if moment_bounds(model).violates_moments:
        warnings.warn(
            "first-moment estimate of a moment-violating model does not converge",
            RuntimeWarning,
            stacklevel=2,
        )
    norms = np.empty(n)
    chunk = 1 << 16
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n), dtype=np.uint64)
        norms[start : start + len(idx)] = np.linalg.norm(
            sample_block(model, stream, idx), axis=1
        )
    mean = float(norms.mean())
    stderr = float(norms.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, stderr
