"""Positive-definite kernels for the feature-space expansions.

Bandwidth conventions used across the experiments all map onto the single
parameter ``gamma`` of ``exp(-gamma * |a - b|^2)``:

* "kernel size h"          -> ``gamma = 1 / (2 h^2)``   (see :func:`gamma_from_size`)
* ``exp(-(x - y)^2 / c)``  -> ``gamma = 1 / c``         (see :func:`gamma_from_divisor`)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQUARED_EXPONENTIAL = "squared_exponential"
LINEAR = "linear"
FAMILIES = (SQUARED_EXPONENTIAL, LINEAR)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth.

    ``linear`` is the plain inner product; it is not normalized and ignores
    ``gamma``. It exists so the input space itself can act as feature space.
    """

    gamma: float = 1.0
    family: str = SQUARED_EXPONENTIAL

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == SQUARED_EXPONENTIAL and not (
            np.isfinite(self.gamma) and self.gamma > 0
        ):
            raise ValueError(f"gamma must be a positive finite number, got {self.gamma}")

    @property
    def normalized(self) -> bool:
        """True when k(x, x) = 1 for every x."""
        return self.family == SQUARED_EXPONENTIAL


def gamma_from_size(h: float) -> float:
    return 1.0 / (2.0 * h * h)


def gamma_from_divisor(c: float) -> float:
    return 1.0 / c


def as_point(x) -> np.ndarray:
    """Coerce an input to a finite 1-D float array (scalars become d=1)."""
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"input point must be a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("input point has non-finite coordinates")
    return p


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = as_point(a)
    b = as_point(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    if spec.family == LINEAR:
        return float(a @ b)
    d = a - b
    return float(np.exp(-spec.gamma * (d @ d)))


def kernel_vector(spec: KernelSpec, points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """k(points[i], x) for every row of ``points`` (shape (m, d))."""
    if points.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {points.shape[1]} vs {x.shape[0]}")
    if spec.family == LINEAR:
        return points @ x
    d = points - x
    return np.exp(-spec.gamma * np.einsum("ij,ij->i", d, d))


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B`` (defaults to ``A``)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.family == LINEAR:
        return A @ B.T
    d = A[:, None, :] - B[None, :, :]
    return np.exp(-spec.gamma * np.einsum("ijk,ijk->ij", d, d))
