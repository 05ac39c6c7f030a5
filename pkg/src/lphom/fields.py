"""Rotation angle fields, rotation/shear matrices and transformation fields D(x).

All matrix callables are vectorised: a batch of points of shape ``(N, d)``
maps to a batch of matrices of shape ``(N, d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray


def rotation(alpha) -> Array:
    """Inverse rotation about the x3-axis by ``alpha``.

    Rows are (cos a, sin a, 0), (-sin a, cos a, 0), (0, 0, 1). Accepts a scalar
    (returns 3x3) or an array of angles (returns ``(..., 3, 3)``).
    """
    a = np.asarray(alpha, dtype=float)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class RotationAngleField:
    """Layer angle gamma(t) with closed-form first and second derivatives."""

    gamma: Callable[[Array], Array]
    dgamma: Callable[[Array], Array]
    d2gamma: Callable[[Array], Array]
    name: str = "custom"

    def __call__(self, t):
        return self.gamma(np.asarray(t, dtype=float))

    @property
    def is_constant(self) -> bool:
        t = np.linspace(-2.0, 2.0, 41)
        return bool(np.all(self.dgamma(t) == 0.0))

    def check(self, lo: float = 0.0, hi: float = 1.0, n: int = 201, h: float = 1e-5) -> float:
        """Spot-check range and derivatives against central differences.

        Returns the largest relative derivative mismatch; raises if the angle
        leaves [0, pi].
        """
        t = np.linspace(lo, hi, n)
        g = self.gamma(t)
        if np.any(g < -1e-14) or np.any(g > np.pi + 1e-14):
            raise ValueError("gamma must take values in [0, pi]")
        fd1 = (self.gamma(t + h) - self.gamma(t - h)) / (2 * h)
        fd2 = (self.dgamma(t + h) - self.dgamma(t - h)) / (2 * h)
        scale1 = max(1.0, float(np.max(np.abs(fd1))))
        scale2 = max(1.0, float(np.max(np.abs(fd2))))
        return max(float(np.max(np.abs(fd1 - self.dgamma(t)))) / scale1,
                   float(np.max(np.abs(fd2 - self.d2gamma(t)))) / scale2)

    @classmethod
    def constant(cls, value: float = 0.0) -> "RotationAngleField":
        return cls(lambda t: np.full_like(np.asarray(t, dtype=float), value),
                   lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                   lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                   name=f"constant({value!r})")

    @classmethod
    def linear(cls, slope: float = 1.0, offset: float = 0.0) -> "RotationAngleField":
        # not range-limited; handy for closed-form shear checks
        return cls(lambda t: offset + slope * np.asarray(t, dtype=float),
                   lambda t: np.full_like(np.asarray(t, dtype=float), slope),
                   lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                   name=f"linear({slope!r},{offset!r})")

    @classmethod
    def default(cls) -> "RotationAngleField":
        """gamma(t) = (pi/2) (1 + sin(pi t)) / 2."""
        return cls(lambda t: 0.25 * np.pi * (1.0 + np.sin(np.pi * np.asarray(t, dtype=float))),
                   lambda t: 0.25 * np.pi ** 2 * np.cos(np.pi * np.asarray(t, dtype=float)),
                   lambda t: -0.25 * np.pi ** 3 * np.sin(np.pi * np.asarray(t, dtype=float)),
                   name="default")


def shear_value(x: Array, gamma: RotationAngleField) -> Array:
    """w(x) = gamma'(x3) (cos(gamma(x3)) x1 + sin(gamma(x3)) x2)."""
    x = np.asarray(x, dtype=float)
    g = gamma(x[..., 2])
    return gamma.dgamma(x[..., 2]) * (np.cos(g) * x[..., 0] + np.sin(g) * x[..., 1])


def shear(x: Array, gamma: RotationAngleField) -> Array:
    """Unit upper-triangular W(x) with w(x) in row 2, column 3."""
    w = shear_value(x, gamma)
    out = np.zeros(np.shape(w) + (3, 3))
    out[..., 0, 0] = out[..., 1, 1] = out[..., 2, 2] = 1.0
    out[..., 1, 2] = w
    return out


@dataclass(frozen=True, eq=False)
class TransformationField:
    """Periodicity-cell deformation x -> D(x) with its inverse.

    ``det_bounds`` are the a-priori constants D1 <= |det D(x)| <= D2 on the
    closure of the domain.
    """

    dim: int
    matrix: Callable[[Array], Array]
    inverse: Callable[[Array], Array]
    det_bounds: tuple[float, float] = (1.0, 1.0)
    name: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo, hi = self.det_bounds
        if not (0 < lo <= hi < np.inf):
            raise ValueError(f"invalid determinant bounds {self.det_bounds}")

    def __call__(self, x) -> Array:
        return self.matrix(np.atleast_2d(np.asarray(x, dtype=float)))

    def inv(self, x) -> Array:
        return self.inverse(np.atleast_2d(np.asarray(x, dtype=float)))

    def det(self, x) -> Array:
        return np.linalg.det(self(x))

    def check(self, points: Array, tol: float = 1e-12) -> float:
        """Verify D D^-1 = I and the determinant bounds at ``points``."""
        points = np.atleast_2d(points)
        prod = self(points) @ self.inv(points)
        defect = float(np.max(np.abs(prod - np.eye(self.dim))))
        if defect > tol:
            raise ValueError(f"D(x) D^-1(x) differs from I by {defect:.3e}")
        det = np.abs(self.det(points))
        lo, hi = self.det_bounds
        if np.any(det < lo * (1 - 1e-12)) or np.any(det > hi * (1 + 1e-12)):
            raise ValueError("determinant bounds violated")
        return defect

    def lipschitz_estimate(self, points: Array, h: float = 1e-6) -> float:
        """Largest finite-difference directional derivative of D over ``points``."""
        points = np.atleast_2d(points)
        best = 0.0
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            diff = (self(points + e) - self(points - e)) / (2 * h)
            best = max(best, float(np.max(np.linalg.norm(diff, axis=(-2, -1), ord=2))))
        return best

    @classmethod
    def identity(cls, dim: int) -> "TransformationField":
        def eye(x):
            return np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)).copy()
        return cls(dim, eye, eye, (1.0, 1.0), name="identity")

    @classmethod
    def constant(cls, M: Array) -> "TransformationField":
        M = np.asarray(M, dtype=float)
        Minv = np.linalg.inv(M)
        det = abs(float(np.linalg.det(M)))
        d = M.shape[0]
        return cls(d, lambda x: np.broadcast_to(M, (x.shape[0], d, d)).copy(),
                   lambda x: np.broadcast_to(Minv, (x.shape[0], d, d)).copy(),
                   (det, det), name="constant")

    @classmethod
    def exponential_1d(cls, lo: float = 0.0, hi: float = 1.0) -> "TransformationField":
        """D(x) = exp(x) on an interval."""
        return cls(1, lambda x: np.exp(x)[:, :, None], lambda x: np.exp(-x)[:, :, None],
                   (float(np.exp(lo)), float(np.exp(hi))), name="exp")

    @classmethod
    def plywood(cls, gamma: RotationAngleField) -> "TransformationField":
        """D(x) = R^-1(gamma(x3)), rotated layers."""
        def mat(x):
            return np.swapaxes(rotation(gamma(x[:, 2])), -1, -2)

        def inv(x):
            return rotation(gamma(x[:, 2]))
        return cls(3, mat, inv, (1.0, 1.0), name="plywood", meta={"gamma": gamma})

    @classmethod
    def plywood_sheared(cls, gamma: RotationAngleField) -> "TransformationField":
        """D(x) = R^-1(gamma(x3)) W(x) for the non-periodic plywood."""
        def mat(x):
            return np.swapaxes(rotation(gamma(x[:, 2])), -1, -2) @ shear(x, gamma)

        def inv(x):
            Winv = shear(x, gamma)
            Winv[..., 1, 2] *= -1.0
            return Winv @ rotation(gamma(x[:, 2]))
        return cls(3, mat, inv, (1.0, 1.0), name="plywood_sheared", meta={"gamma": gamma})
