"""Validated discrete-time linear system ``x' = A x + B u + w``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import StabilityClass, as_matrix, classify_stability

__all__ = ["LinearSystem", "rotation", "benchmark_system"]


@dataclass(frozen=True)
class LinearSystem:
    """An (A, B) pair with consistent dimensions and finite entries.

    ``d`` is the state dimension, ``m`` the input dimension.
    """

    A: np.ndarray
    B: np.ndarray
    _stability: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        b = as_matrix(self.B, "B")
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise ValueError(f"B has {b.shape[0]} rows, A is {a.shape[0]}x{a.shape[1]}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def stability(self) -> StabilityClass:
        if not self._stability:
            self._stability.append(classify_stability(self.A))
        return self._stability[0]


def rotation(angle: float) -> np.ndarray:
    """2x2 counterclockwise rotation matrix."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def benchmark_system(angle: float = 0.8) -> LinearSystem:
    """The built-in 4-d benchmark: a planar rotation alongside two contracting
    modes, driven by a single input acting in the rotation plane."""
    a = np.zeros((4, 4))
    a[:2, :2] = rotation(angle)
    a[2, 2] = 0.5
    a[3, 3] = 0.9
    b = np.array([[1.0], [0.0], [0.0], [0.0]])
    return LinearSystem(a, b)
