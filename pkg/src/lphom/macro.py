"""Structured-grid Galerkin solvers for the macroscopic and fine-scale problems.

Bilinear (2D) and trilinear (3D) elements on axis-aligned boxes, 2^d Gauss
points per element, Dirichlet data imposed by lifting.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .cell import HomogenizedTensorField
from .geometry import DomainBox
from .solvers import SolveInfo, SolverError, spd_solve
from .tensors import VOIGT_PAIRS, Tensor4

_MANDEL_SCALE = np.array([1.0, 1.0, 1.0, math.sqrt(2.0), math.sqrt(2.0), math.sqrt(2.0)])


def _gauss01(m: int):
    g, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (g + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class MacroMesh:
    """Uniform structured mesh of ``shape`` elements over ``domain``."""

    domain: DomainBox
    shape: tuple

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != self.domain.dim or self.domain.dim not in (2, 3):
            raise ValueError("mesh shape must match a 2D or 3D domain")
        if min(shape) < 1:
            raise ValueError("need at least one element per axis")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def uniform(cls, domain: DomainBox, n: int) -> "MacroMesh":
        return cls(domain, (n,) * domain.dim)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def h(self) -> np.ndarray:
        return self.domain.sides / np.asarray(self.shape)

    @property
    def node_shape(self) -> tuple:
        return tuple(s + 1 for s in self.shape)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.shape))

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def nodes(self) -> np.ndarray:
        axes = [self.domain.lo[i] + self.h[i] * np.arange(self.node_shape[i]) for i in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array(list(itertools.product((0, 1), repeat=self.dim)))

    @cached_property
    def elements(self) -> np.ndarray:
        idx = np.stack(np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij"), axis=-1).reshape(-1, self.dim)
        corners = idx[:, None, :] + self.offsets[None]
        return np.ravel_multi_index(tuple(corners[..., i] for i in range(self.dim)), self.node_shape)

    @cached_property
    def centroids(self) -> np.ndarray:
        idx = np.stack(np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij"), axis=-1).reshape(-1, self.dim)
        return self.domain.lo + (idx + 0.5) * self.h

    @cached_property
    def boundary(self) -> np.ndarray:
        idx = np.stack(np.unravel_index(np.arange(self.n_nodes), self.node_shape), axis=-1)
        return np.any((idx == 0) | (idx == np.asarray(self.shape)), axis=-1)

    def reference(self, m: int = 2):
        """Reference quadrature: unit points (q, d), weights (q,), shape values (q, a), gradients (q, a, d)."""
        s, w = _gauss01(m)
        pts = np.array(list(itertools.product(s, repeat=self.dim)))
        wts = np.prod(np.array(list(itertools.product(w, repeat=self.dim))), axis=-1) * self.element_volume
        off = self.offsets
        fac = np.where(off[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])  # (q, a, d)
        N = np.prod(fac, axis=-1)
        dN = np.empty(fac.shape)
        for i in range(self.dim):
            others = np.prod(np.delete(fac, i, axis=-1), axis=-1)
            dN[:, :, i] = np.where(off[None, :, i] == 1, 1.0, -1.0) * others / self.h[i]
        return pts, wts, N, dN

    def quadrature_points(self, m: int = 2) -> np.ndarray:
        """Physical quadrature points, shape (elements, q, d)."""
        pts, _, _, _ = self.reference(m)
        lo = self.centroids - 0.5 * self.h
        return lo[:, None, :] + pts[None] * self.h


@dataclass
class BoundaryData:
    """Dirichlet data g and body load G, both callables on point batches."""

    g: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def zero(cls, ncomp: int = 1) -> "BoundaryData":
        if ncomp == 1:
            return cls(lambda x: np.zeros(len(x)))
        return cls(lambda x: np.zeros((len(x), ncomp)))

    def values(self, x: np.ndarray, ncomp: int) -> np.ndarray:
        v = np.asarray(self.g(x), dtype=float).reshape(len(x), ncomp)
        if not np.all(np.isfinite(v)):
            raise ValueError("boundary data g is not finite on the sampled nodes")
        return v

    def load(self, x: np.ndarray, ncomp: int) -> np.ndarray:
        if self.G is None:
            return np.zeros((len(x), ncomp))
        v = np.asarray(self.G(x), dtype=float).reshape(len(x), ncomp)
        if not np.all(np.isfinite(v)):
            raise ValueError("body load G is not finite at quadrature points")
        return v


@dataclass
class MacroSolution:
    mesh: MacroMesh
    u: np.ndarray  # (nodes, ncomp)
    residual: float
    energy: float
    info: SolveInfo
    meta: dict = field(default_factory=dict)

    @property
    def ncomp(self) -> int:
        return self.u.shape[1]

    def evaluate(self, m: int = 2):
        """Values (e, q, c) and gradients (e, q, c, d) at the m^d Gauss points of every element."""
        _, _, N, dN = self.mesh.reference(m)
        ue = self.u[self.mesh.elements]  # (e, a, c)
        return np.einsum("qa,eac->eqc", N, ue), np.einsum("qad,eac->eqcd", dN, ue)

    def l2_error(self, exact: Callable[[np.ndarray], np.ndarray], m: int = 3) -> float:
        _, w, _, _ = self.mesh.reference(m)
        vals, _ = self.evaluate(m)
        x = self.mesh.quadrature_points(m)
        ex = np.asarray(exact(x.reshape(-1, self.mesh.dim)), dtype=float).reshape(vals.shape)
        return math.sqrt(math.fsum(np.einsum("q,eqc->e", w, (vals - ex) ** 2)))

    def l2_difference(self, other: "MacroSolution", m: int = 2) -> float:
        if other.mesh.shape != self.mesh.shape:
            raise ValueError("solutions live on different meshes")
        _, w, _, _ = self.mesh.reference(m)
        d = MacroSolution(self.mesh, self.u - other.u, 0.0, 0.0, self.info)
        vals, _ = d.evaluate(m)
        return math.sqrt(math.fsum(np.einsum("q,eqc->e", w, vals ** 2)))

    def h1_norm(self, m: int = 2) -> float:
        _, w, _, _ = self.mesh.reference(m)
        vals, grads = self.evaluate(m)
        return math.sqrt(math.fsum(np.einsum("q,eqc->e", w, vals ** 2))
                         + math.fsum(np.einsum("q,eqcd->e", w, grads ** 2)))

    def export(self, stem) -> dict:
        """``<stem>.json`` header and ``<stem>.bin`` little-endian float64, node-major."""
        header = {
            "shape_nodes": list(self.mesh.node_shape),
            "origin": [float(v) for v in self.mesh.domain.lo],
            "spacing": [float(v) for v in self.mesh.h],
            "components": self.ncomp,
            "dtype": "<f8",
            "order": "node-major, C order over node indices, components fastest",
            "residual": self.residual,
            "energy": self.energy,
            **self.meta,
        }
        with open(f"{stem}.bin", "wb") as fh:
            fh.write(np.ascontiguousarray(self.u, dtype="<f8").tobytes())
        with open(f"{stem}.json", "w") as fh:
            json.dump(header, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return header

    def line_samples(self, axis: int = 0) -> str:
        """CSV of nodal values along ``axis`` through the mesh centre line."""
        ns = self.mesh.node_shape
        mid = [s // 2 for s in ns]
        idx = []
        for k in range(ns[axis]):
            mid[axis] = k
            idx.append(np.ravel_multi_index(tuple(mid), ns))
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["s"] + [f"u{c}" for c in range(self.ncomp)])
        for i in idx:
            wr.writerow([repr(float(self.mesh.nodes[i, axis]))] + [repr(float(v)) for v in self.u[i]])
        return buf.getvalue()


def read_field(stem) -> tuple[np.ndarray, dict]:
    with open(f"{stem}.json") as fh:
        header = json.load(fh)
    u = np.fromfile(f"{stem}.bin", dtype="<f8").reshape(-1, header["components"])
    return u, header


# ---------------------------------------------------------------------------
# assembly


def _strain_operators(dN: np.ndarray) -> np.ndarray:
    """Mandel strain-displacement matrices (q, 6, 3a) for 3-component trilinear fields."""
    q, a, _ = dN.shape
    B = np.zeros((q, 6, 3 * a))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        s = 1.0 if i == j else 1.0 / math.sqrt(2.0)
        for b in range(a):
            B[:, I, 3 * b + i] += s * dN[:, b, j]
            if i != j:
                B[:, I, 3 * b + j] += s * dN[:, b, i]
    return B


def _global(mesh: MacroMesh, Ke: np.ndarray, ncomp: int) -> sp.csr_matrix:
    dofs = (mesh.elements[:, :, None] * ncomp + np.arange(ncomp)).reshape(mesh.n_elements, -1)
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = mesh.n_nodes * ncomp
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def _load_vector(mesh: MacroMesh, bc: BoundaryData, ncomp: int) -> np.ndarray:
    _, w, N, _ = mesh.reference(2)
    x = mesh.quadrature_points(2)
    G = bc.load(x.reshape(-1, mesh.dim), ncomp).reshape(mesh.n_elements, -1, ncomp)
    fe = np.einsum("q,qa,eqc->eac", w, N, G)
    f = np.zeros((mesh.n_nodes, ncomp))
    for c in range(ncomp):
        f[:, c] = np.bincount(mesh.elements.ravel(), weights=fe[:, :, c].ravel(), minlength=mesh.n_nodes)
    return f.ravel()


def _rigid_modes(mesh: MacroMesh) -> np.ndarray:
    x = mesh.nodes - mesh.domain.lo - 0.5 * mesh.domain.sides
    n = mesh.n_nodes
    B = np.zeros((n, 3, 6))
    for c in range(3):
        B[:, c, c] = 1.0
    B[:, 0, 3], B[:, 1, 3] = -x[:, 1], x[:, 0]
    B[:, 1, 4], B[:, 2, 4] = -x[:, 2], x[:, 1]
    B[:, 0, 5], B[:, 2, 5] = x[:, 2], -x[:, 0]
    return B.reshape(3 * n, 6)


def _solve_lifted(mesh, K, f, bc, ncomp, rtol, near_null=None, meta=None) -> MacroSolution:
    fixed_nodes = mesh.boundary
    fixed = np.repeat(fixed_nodes, ncomp)
    free = ~fixed
    g = bc.values(mesh.nodes[fixed_nodes], ncomp).ravel()
    u = np.zeros(mesh.n_nodes * ncomp)
    u[fixed] = g
    Kff = K[free][:, free]
    rhs = f[free] - K[free][:, fixed] @ g
    diag = Kff.diagonal()
    if np.any(diag <= 0):
        raise SolverError("assembled macroscopic operator has a non-positive diagonal (indefinite system)")
    if free.any():
        nn = near_null[free] if near_null is not None else None
        uf, info = spd_solve(Kff, rhs, rtol=min(rtol, 1e-10), near_null=nn)
        u[free] = uf
        scale = max(float(np.linalg.norm(rhs)), 1e-300)
        residual = float(np.linalg.norm(Kff @ uf - rhs)) / scale if np.linalg.norm(rhs) > 0 else 0.0
    else:
        info, residual = SolveInfo(0, 0.0), 0.0
    if residual > rtol:
        raise SolverError(f"macroscopic solve residual {residual:.3e} above {rtol:.1e}")
    energy = float(0.5 * u @ (K @ u) - f @ u)
    return MacroSolution(mesh, u.reshape(-1, ncomp), residual, energy, info, dict(meta or {}))


def _mandel_batch(c: np.ndarray) -> np.ndarray:
    """(..., 3, 3, 3, 3) -> (..., 6, 6) Mandel."""
    out = np.empty(c.shape[:-4] + (6, 6))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            out[..., I, J] = c[..., i, j, k, l] * _MANDEL_SCALE[I] * _MANDEL_SCALE[J]
    return out


def elastic_stiffness(mesh: MacroMesh, C: np.ndarray) -> sp.csr_matrix:
    """Global stiffness for per-element Mandel matrices ``C`` (e, 6, 6)."""
    _, w, _, dN = mesh.reference(2)
    B = _strain_operators(dN)
    Ke = np.zeros((mesh.n_elements, B.shape[2], B.shape[2]))
    for q in range(len(w)):
        Ke += w[q] * np.einsum("Ia,eIb->eab", B[q], np.einsum("eIJ,Jb->eIb", C, B[q]))
    return _global(mesh, Ke, 3)


def scalar_stiffness(mesh: MacroMesh, a: np.ndarray) -> sp.csr_matrix:
    """Global stiffness for per-element conductivities ``a`` (e,) or (e, d, d)."""
    _, w, _, dN = mesh.reference(2)
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None, None] * np.eye(mesh.dim)
    Ke = np.einsum("q,qai,eij,qbj->eab", w, dN, a, dN, optimize=True)
    return _global(mesh, Ke, 1)


def solve_macro_elastic(Ahom: HomogenizedTensorField | Tensor4, bc: BoundaryData, mesh: MacroMesh,
                        rtol: float = 1e-9) -> MacroSolution:
    """Galerkin solve of -div(A(x3) e(u)) = G with u = g on the boundary."""
    if mesh.dim != 3:
        raise ValueError("elastic macroscopic problems are three-dimensional")
    if isinstance(Ahom, Tensor4):
        Ahom = HomogenizedTensorField.constant(Ahom)
    lo, hi = mesh.domain.lo, mesh.domain.hi
    for ax in Ahom.axes:
        if not Ahom.covers(lo[ax], hi[ax], ax):
            raise ValueError(f"tensor samples do not cover the mesh range along x{ax + 1}")
    C = _mandel_batch(Ahom(mesh.centroids))
    ev = np.linalg.eigvalsh(0.5 * (C + np.swapaxes(C, -1, -2)))
    if np.any(ev[:, 0] <= 0):
        raise SolverError("interpolated tensor is not positive definite (indefinite system)")
    K = elastic_stiffness(mesh, C)
    f = _load_vector(mesh, bc, 3)
    return _solve_lifted(mesh, K, f, bc, 3, rtol, near_null=_rigid_modes(mesh),
                         meta={"problem": "elastic", "tensor_label": Ahom.label})


def solve_macro_scalar(ahom, bc: BoundaryData, mesh: MacroMesh, rtol: float = 1e-9) -> MacroSolution:
    """Scalar analog: -div(a_hom grad u) = G, u = g on the boundary.

    ``ahom`` is a d x d matrix, a per-element array (e, d, d) or (e,), or a
    callable mapping element centroids to one of those.
    """
    a = ahom(mesh.centroids) if callable(ahom) else np.asarray(ahom, dtype=float)
    if a.ndim == 2 and a.shape == (mesh.dim, mesh.dim):
        a = np.broadcast_to(a, (mesh.n_elements, mesh.dim, mesh.dim))
    if a.ndim == 0:
        a = np.full(mesh.n_elements, float(a))
    if a.shape[0] != mesh.n_elements:
        raise ValueError("coefficient must be given per element")
    K = scalar_stiffness(mesh, a)
    f = _load_vector(mesh, bc, 1)
    return _solve_lifted(mesh, K, f, bc, 1, rtol, meta={"problem": "scalar"})


def solve_direct_micro_scalar(chi: Callable[[np.ndarray], np.ndarray], a1: float, a2: float,
                              epsilon: float, bc: BoundaryData, mesh: MacroMesh,
                              rtol: float = 1e-9, per_period: int = 8) -> MacroSolution:
    """Fine-scale solve with a1 where ``chi`` = 1 and a2 elsewhere (sampled at element centroids)."""
    need = [int(math.ceil(s * per_period / epsilon)) for s in mesh.domain.sides]
    if any(n < m for n, m in zip(mesh.shape, need)):
        raise ValueError(f"mesh {mesh.shape} under-resolves eps={epsilon:g}; need at least {tuple(need)} "
                         f"elements ({per_period} per period)")
    x = np.asarray(chi(mesh.centroids), dtype=float)
    a = a2 + (a1 - a2) * x
    sol = solve_macro_scalar(a, bc, mesh, rtol)
    sol.meta.update(problem="direct_micro", epsilon=epsilon)
    return sol


# ---------------------------------------------------------------------------
# manufactured solutions


def sine_product(x: np.ndarray) -> np.ndarray:
    return np.prod(np.sin(np.pi * x), axis=-1)


def manufactured_elastic(lam: float, mu: float):
    """u*_c = prod sin(pi x_i) (all three components) and G = -div(C e(u*)) for isotropic C.

    div(C e(u)) = mu Lap u + (lam + mu) grad div u.
    """
    def u(x):
        s = sine_product(np.atleast_2d(x))
        return np.stack([s, s, s], axis=-1)

    def hess(x):
        x = np.atleast_2d(x)
        S, Cc = np.sin(np.pi * x), np.cos(np.pi * x)
        H = np.empty((len(x), 3, 3))
        for k in range(3):
            for i in range(3):
                fac = np.ones(len(x))
                for m in range(3):
                    if m == k == i:
                        fac = fac * -S[:, m]
                    elif m in (k, i):
                        fac = fac * Cc[:, m]
                    else:
                        fac = fac * S[:, m]
                H[:, k, i] = np.pi ** 2 * fac
        return H

    def G(x):
        H = hess(x)
        lap = np.trace(H, axis1=1, axis2=2)
        grad_div = H.sum(axis=2)  # d_k sum_i d_i s
        return -(mu * lap[:, None] + (lam + mu) * grad_div)

    return u, G


def manufactured_scalar(a):
    """u* = prod sin(pi x_i), G = -div(a grad u*) for a constant diagonal matrix ``a``."""
    a = np.asarray(a, dtype=float)
    if not np.allclose(a, np.diag(np.diag(a))):
        raise ValueError("manufactured scalar solution needs a diagonal coefficient")
    tr = float(np.trace(a))
    return sine_product, lambda x: np.pi ** 2 * tr * sine_product(x)
