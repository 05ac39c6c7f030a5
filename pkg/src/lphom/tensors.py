"""Rank-4 stiffness tensors, Voigt/Mandel conversions and bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Voigt order used everywhere in files and corrector sets
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
_MANDEL_SCALE = np.array([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])


def sym_to_mandel(S: np.ndarray) -> np.ndarray:
    """Symmetric 3x3 (batched) -> Mandel 6-vector."""
    S = np.asarray(S)
    return np.stack([S[..., i, j] for i, j in VOIGT_PAIRS], axis=-1) * _MANDEL_SCALE


def mandel_to_sym(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v) / _MANDEL_SCALE
    out = np.zeros(v.shape[:-1] + (3, 3))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        out[..., i, j] = v[..., I]
        out[..., j, i] = v[..., I]
    return out


def unit_strain(I: int) -> np.ndarray:
    """l_ij = (l_i x l_j + l_j x l_i)/2 for the Voigt pair number ``I``."""
    i, j = VOIGT_PAIRS[I]
    L = np.zeros((3, 3))
    L[i, j] += 0.5
    L[j, i] += 0.5
    return L


@dataclass(frozen=True, eq=False)
class Tensor4:
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != (3, 3, 3, 3):
            raise ValueError("Tensor4 needs shape (3, 3, 3, 3)")
        object.__setattr__(self, "c", c)

    @classmethod
    def isotropic(cls, lam: float, mu: float) -> "Tensor4":
        d = np.eye(3)
        c = (lam * np.einsum("ij,kl->ijkl", d, d)
             + mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)))
        return cls(c)

    @classmethod
    def from_young(cls, E: float, nu: float) -> "Tensor4":
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        return cls.isotropic(lam, mu)

    @classmethod
    def from_voigt(cls, V) -> "Tensor4":
        V = np.asarray(V, dtype=float)
        if V.shape != (6, 6):
            raise ValueError("Voigt matrix must be 6x6")
        c = np.zeros((3, 3, 3, 3))
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            for J, (k, l) in enumerate(VOIGT_PAIRS):
                for a, b in ((i, j), (j, i)):
                    for p, q in ((k, l), (l, k)):
                        c[a, b, p, q] = V[I, J]
        return cls(c)

    @classmethod
    def from_mandel(cls, M) -> "Tensor4":
        M = np.asarray(M, dtype=float)
        return cls.from_voigt(M / np.outer(_MANDEL_SCALE, _MANDEL_SCALE))

    def to_voigt(self) -> np.ndarray:
        V = np.empty((6, 6))
        for I, (i, j) in enumerate(VOIGT_PAIRS):
            for J, (k, l) in enumerate(VOIGT_PAIRS):
                V[I, J] = self.c[i, j, k, l]
        return V

    def to_mandel(self) -> np.ndarray:
        return self.to_voigt() * np.outer(_MANDEL_SCALE, _MANDEL_SCALE)

    def __add__(self, other):
        return Tensor4(self.c + other.c)

    def __sub__(self, other):
        return Tensor4(self.c - other.c)

    def __mul__(self, s):
        return Tensor4(self.c * s)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.c))

    def apply(self, S) -> np.ndarray:
        return np.einsum("ijkl,...kl->...ij", self.c, S)

    def symmetry_defects(self) -> dict:
        c = self.c
        scale = max(float(np.max(np.abs(c))), 1e-300)
        return {
            "minor_ij": float(np.max(np.abs(c - c.transpose(1, 0, 2, 3)))) / scale,
            "minor_kl": float(np.max(np.abs(c - c.transpose(0, 1, 3, 2)))) / scale,
            "major": float(np.max(np.abs(c - c.transpose(2, 3, 0, 1)))) / scale,
        }

    def validate(self, tol: float = 1e-8) -> "Tensor4":
        """Raise naming the first violated symmetry or loss of definiteness."""
        for name, val in self.symmetry_defects().items():
            if val > tol:
                raise ValueError(f"tensor violates {name} symmetry (relative defect {val:.3e})")
        if self.min_eigenvalue() <= 0:
            raise ValueError("tensor is not positive definite on symmetric matrices")
        return self

    def min_eigenvalue(self) -> float:
        M = self.to_mandel()
        return float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))))

    def rayleigh(self, S) -> np.ndarray:
        S = np.asarray(S)
        return np.einsum("...ij,ijkl,...kl->...", S, self.c, S) / np.einsum("...ij,...ij->...", S, S)

    def min_probe_rayleigh(self) -> float:
        """Smallest Rayleigh quotient over the six unit strains and their pairwise sums."""
        return float(np.min(self.rayleigh(probe_basis())))

    def rotate(self, Q) -> "Tensor4":
        """Q_ia Q_jb Q_kc Q_ld c_abcd."""
        Q = np.asarray(Q, dtype=float)
        return Tensor4(np.einsum("ia,jb,kc,ld,abcd->ijkl", Q, Q, Q, Q, self.c, optimize=True))

    def inverse_mandel(self) -> np.ndarray:
        return np.linalg.inv(self.to_mandel())

    def is_isotropic(self, tol: float = 1e-12) -> bool:
        M = self.to_mandel()
        lam = M[0, 1]
        mu = 0.5 * M[3, 3]
        return float(np.max(np.abs(M - Tensor4.isotropic(lam, mu).to_mandel()))) <= tol * max(1.0, np.max(np.abs(M)))


def probe_basis() -> np.ndarray:
    """The six unit strains l_ij plus the fifteen pairwise sums."""
    units = [unit_strain(I) for I in range(6)]
    probes = list(units)
    for a in range(6):
        for b in range(a + 1, 6):
            probes.append(units[a] + units[b])
    return np.array(probes)


def quadratic_le(lower, upper, tol: float = 1e-10) -> bool:
    """``lower <= upper`` as quadratic forms on symmetric matrices.

    Works on Tensor4 pairs (eigenvalues of the Mandel difference) or on
    scalars / square matrices.
    """
    if isinstance(lower, Tensor4):
        diff = upper.to_mandel() - lower.to_mandel()
        scale = max(np.max(np.abs(upper.to_mandel())), 1e-300)
    else:
        diff = np.atleast_2d(np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float))
        scale = max(float(np.max(np.abs(np.atleast_2d(upper)))), 1e-300)
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.T))
    return bool(ev.min() >= -tol * scale)


def probe_le(lower: Tensor4, upper: Tensor4, tol: float = 1e-10) -> bool:
    """Ordering tested only on the probe basis."""
    P = probe_basis()
    lo = np.einsum("pij,ijkl,pkl->p", P, lower.c, P)
    hi = np.einsum("pij,ijkl,pkl->p", P, upper.c, P)
    return bool(np.all(lo <= hi + tol * np.max(np.abs(hi))))


def voigt_reuss_bounds(a: float, E1, E2, theta: float | None = None):
    """(Reuss, Voigt) bounds for fibre fraction ``theta`` (default pi a^2).

    Accepts Tensor4 moduli or scalar conductivities.
    """
    th = np.pi * a * a if theta is None else float(theta)
    if not 0.0 <= th <= 1.0:
        raise ValueError("volume fraction must lie in [0, 1]")
    if isinstance(E1, Tensor4):
        M1, M2 = E1.to_mandel(), E2.to_mandel()
        for M in (M1, M2):
            if abs(np.linalg.det(M)) < 1e-300 or np.min(np.linalg.eigvalsh(M)) <= 0:
                raise ValueError("moduli must be positive definite")
        voigt = Tensor4.from_mandel(th * M1 + (1 - th) * M2)
        reuss = Tensor4.from_mandel(np.linalg.inv(th * np.linalg.inv(M1) + (1 - th) * np.linalg.inv(M2)))
        return reuss, voigt
    e1, e2 = float(E1), float(E2)
    if e1 <= 0 or e2 <= 0:
        raise ValueError("moduli must be positive")
    return 1.0 / (th / e1 + (1 - th) / e2), th * e1 + (1 - th) * e2
