"""Periodic finite-element cell problems and homogenized tensors.

The plywood cell problems reduce to two dimensions: unknowns are
3-component displacements of the cell coordinates (y2, y3), strains are
built with the 2x3 matrix whose rows are (-sin g, cos g, 0) and (0, 0, 1).
Grid axis 0 carries y2 and axis 1 carries y3 (for the scalar analog they
are simply the two cell coordinates). Elements are bilinear quadrilaterals
with 2x2 Gauss points and one coefficient per element sampled at the
centroid; the sheared cell is mapped to the unit square.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .fields import RotationAngleField, rotation, shear_value
from .solvers import SolverError, constant_modes, deflated_pcg
from .tensors import VOIGT_PAIRS, Tensor4, quadratic_le, sym_to_mandel, unit_strain, voigt_reuss_bounds

_G = 0.5 / math.sqrt(3.0)
_GAUSS = np.array([[0.5 - _G, 0.5 - _G], [0.5 + _G, 0.5 - _G], [0.5 + _G, 0.5 + _G], [0.5 - _G, 0.5 + _G]])
_LOCAL = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])


def _shape_gradients(n: int) -> np.ndarray:
    """d N_a / d z at the four Gauss points, shape (4 gp, 4 nodes, 2)."""
    out = np.empty((4, 4, 2))
    for g, (s, t) in enumerate(_GAUSS):
        for a, (i, j) in enumerate(_LOCAL):
            fs = s if i else 1 - s
            ft = t if j else 1 - t
            out[g, a, 0] = (1 if i else -1) * ft * n
            out[g, a, 1] = (1 if j else -1) * fs * n
    return out


def _shape_values() -> np.ndarray:
    out = np.empty((4, 4))
    for g, (s, t) in enumerate(_GAUSS):
        for a, (i, j) in enumerate(_LOCAL):
            out[g, a] = (s if i else 1 - s) * (t if j else 1 - t)
    return out


def element_nodes(n: int) -> np.ndarray:
    """Periodic node numbers of every element, shape (n*n, 4)."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    return np.stack([((i + di) % n) * n + (j + dj) % n for di, dj in _LOCAL], axis=-1)


def element_centroids(n: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.stack([(i.ravel() + 0.5) / n, (j.ravel() + 0.5) / n], axis=-1)


def _shear_matrix(w: float) -> np.ndarray:
    return np.array([[1.0, w], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class PeriodicCellGrid:
    """n x n periodic grid with one coefficient per element.

    ``coeff`` holds Mandel 6x6 matrices (elastic) or scalars. ``shear`` is the
    parameter w of the parallelogram cell spanned by (1, 0) and (w, 1).
    """

    n: int
    coeff: np.ndarray
    fibre: np.ndarray
    shear: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ne = self.n * self.n
        if self.coeff.shape[0] != ne:
            raise ValueError("exactly one coefficient per element required")

    @property
    def kind(self) -> str:
        return "scalar" if self.coeff.ndim == 1 else "elastic"

    @property
    def ndof(self) -> int:
        return self.n * self.n * (1 if self.kind == "scalar" else 3)

    @property
    def volume_fraction(self) -> float:
        return float(np.mean(self.fibre))

    @property
    def gauss_weights(self) -> np.ndarray:
        """Per-element, per-Gauss-point weights (sum = cell area = 1)."""
        jac = abs(np.linalg.det(_shear_matrix(self.shear)))
        return np.full((self.n * self.n, 4), 0.25 * jac / self.n ** 2)

    def physical_gradients(self) -> np.ndarray:
        """Shape gradients in cell coordinates, shape (4, 4, 2)."""
        g = _shape_gradients(self.n)
        Sit = np.linalg.inv(_shear_matrix(self.shear)).T
        return g @ Sit.T


def _fibre_mask(n: int, a: float, shear: float = 0.0) -> np.ndarray:
    """Element centroids within distance a of the (sheared) lattice through (1/2, 1/2)."""
    z = element_centroids(n) - 0.5
    S = _shear_matrix(shear)
    best = np.full(z.shape[0], np.inf)
    for m2 in (-1, 0, 1):
        for m1 in range(-2 - int(abs(shear)), 3 + int(abs(shear))):
            d = (z - np.array([m1, m2])) @ S.T
            best = np.minimum(best, np.sum(d * d, axis=-1))
    return best <= a * a


def build_cell_coefficient(a: float, E1: Tensor4, E2: Tensor4, n: int, shear: float = 0.0) -> PeriodicCellGrid:
    """Elastic cell grid: E1 where the element centroid lies in the fibre, E2 elsewhere."""
    if not 0.0 < a < 0.5:
        raise ValueError("fibre radius fraction a must lie in (0, 1/2)")
    E1.validate()
    E2.validate()
    mask = _fibre_mask(n, a, shear)
    coeff = np.where(mask[:, None, None], E1.to_mandel()[None], E2.to_mandel()[None])
    return PeriodicCellGrid(n, coeff, mask, shear, {"a": a})


def scalar_cell(n: int, fibre: Callable[[np.ndarray], np.ndarray] | np.ndarray, a1: float, a2: float) -> PeriodicCellGrid:
    """Scalar grid with a1 on elements whose centroid satisfies ``fibre``, a2 elsewhere."""
    if a1 <= 0 or a2 <= 0:
        raise ValueError("conductivities must be positive")
    mask = np.asarray(fibre(element_centroids(n)) if callable(fibre) else fibre, dtype=bool)
    return PeriodicCellGrid(n, np.where(mask, float(a1), float(a2)), mask)


def laminate_cell(n: int, a1: float, a2: float, axis: int = 1) -> PeriodicCellGrid:
    """a1 for y_axis < 1/2, a2 otherwise."""
    return scalar_cell(n, lambda c: c[:, axis] < 0.5, a1, a2)


def checkerboard_cell(n: int, a1: float, a2: float) -> PeriodicCellGrid:
    return scalar_cell(n, lambda c: (c[:, 0] < 0.5) == (c[:, 1] < 0.5), a1, a2)


def disk_cell(n: int, radius: float, a1: float, a2: float) -> PeriodicCellGrid:
    return scalar_cell(n, lambda c: np.sum((c - 0.5) ** 2, axis=-1) <= radius ** 2, a1, a2)


# ---------------------------------------------------------------------------
# strain operators


def reduced_rotation(gamma_value: float) -> np.ndarray:
    """2x3 matrix with rows (-sin g, cos g, 0) and (0, 0, 1)."""
    return rotation(gamma_value)[1:, :]


def reduced_strain(grad: np.ndarray, gamma_value: float) -> np.ndarray:
    """Symmetric 3x3 strain from cell gradients of a 3-component field.

    ``grad[..., c, :]`` is the 2-gradient of component c; entry (k, l) is
    ((Rh^T grad v^l)_k + (Rh^T grad v^k)_l) / 2.
    """
    Rh = reduced_rotation(gamma_value)
    H = np.einsum("ak,...ca->...kc", Rh, np.asarray(grad, dtype=float))  # H[k, c] = (Rh^T grad v^c)_k
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _elastic_B(grid: PeriodicCellGrid, gamma_value: float) -> np.ndarray:
    """Mandel strain-displacement matrices, shape (4 gp, 6, 12)."""
    g = grid.physical_gradients()
    B = np.zeros((4, 6, 12))
    for a in range(4):
        for c in range(3):
            grad = np.zeros((4, 3, 2))
            grad[:, c, :] = g[:, a, :]
            B[:, :, 3 * a + c] = sym_to_mandel(reduced_strain(grad, gamma_value))
    return B


@dataclass
class CorrectorSet:
    """Zero-mean periodic correctors, Voigt order (11, 22, 33, 23, 13, 12)."""

    fields: np.ndarray
    residuals: list
    iterations: list
    gamma_value: float
    kind: str = "elastic"

    def field(self, i: int, j: int) -> np.ndarray:
        I = VOIGT_PAIRS.index((min(i, j), max(i, j)))
        return self.fields[I]


def _assemble(grid: PeriodicCellGrid, Bg: np.ndarray):
    """Global stiffness and per-element matrices for gp strain operators ``Bg``."""
    n = grid.n
    ncomp = 1 if grid.kind == "scalar" else 3
    w = grid.gauss_weights[0]  # uniform per element
    if grid.kind == "scalar":
        Ke = np.einsum("g,gxa,e,gxb->eab", w, Bg, grid.coeff, Bg)
    else:
        Ke = np.einsum("g,gIa,eIJ,gJb->eab", w, Bg, grid.coeff, Bg, optimize=True)
    nodes = element_nodes(n)
    dofs = (nodes[:, :, None] * ncomp + np.arange(ncomp)).reshape(nodes.shape[0], -1)
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(grid.ndof, grid.ndof)).tocsr()
    K.sum_duplicates()
    return K, dofs


def _solve_loads(grid, Bg, loads, maxiter=None, rtol=1e-10, workers=1):
    """Solve K u = -sum_gp w B^T C L for each load vector L (Mandel or 2-vector)."""
    K, dofs = _assemble(grid, Bg)
    w = grid.gauss_weights[0]
    ncomp = 1 if grid.kind == "scalar" else 3
    Z = constant_modes(grid.ndof, ncomp)
    maxiter = maxiter or 50 * grid.n * (4 if grid.kind == "elastic" else 1)

    def one(L):
        if grid.kind == "scalar":
            fe = -np.einsum("g,gxa,e,x->ea", w, Bg, grid.coeff, L)
        else:
            fe = -np.einsum("g,gIa,eIJ,J->ea", w, Bg, grid.coeff, L)
        f = np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=grid.ndof)
        u, info = deflated_pcg(K, f, Z, rtol=rtol, maxiter=maxiter)
        if info.residual > max(10 * rtol, 1e-10):
            raise SolverError(f"cell solve residual {info.residual:.3e} above tolerance")
        return u, info

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, loads))
    else:
        out = [one(L) for L in loads]
    return K, dofs, out


def solve_cell_elastic(grid: PeriodicCellGrid, gamma_value: float, workers: int = 1) -> CorrectorSet:
    """Correctors for the six unit strains l_ij on an elastic cell grid."""
    if grid.kind != "elastic":
        raise ValueError("elastic cell solve needs a tensor coefficient grid")
    Bg = _elastic_B(grid, gamma_value)
    loads = [sym_to_mandel(unit_strain(I)) for I in range(6)]
    _, _, out = _solve_loads(grid, Bg, loads, workers=workers)
    fields = np.stack([u.reshape(-1, 3) for u, _ in out])
    return CorrectorSet(fields, [i.residual for _, i in out], [i.iterations for _, i in out], float(gamma_value))


def solve_cell_sheared(grid: PeriodicCellGrid, gamma_value: float, workers: int = 1,
                       max_shear: float = 8.0) -> CorrectorSet:
    """Cell problem on the parallelogram cell of shear ``grid.shear``, pulled back to the square."""
    if abs(grid.shear) > max_shear:
        raise ValueError(f"|w| = {abs(grid.shear):.3g} exceeds the supported bound {max_shear}")
    return solve_cell_elastic(grid, gamma_value, workers)


def _element_dofs(grid, u):
    nodes = element_nodes(grid.n)
    if grid.kind == "scalar":
        return u[nodes]
    return u.reshape(-1, 3)[nodes].reshape(nodes.shape[0], 12)


def assemble_Ahom(grid: PeriodicCellGrid, gamma_value: float, correctors: CorrectorSet,
                  tol: float = 1e-8) -> Tensor4:
    """Cell average of C (l_ij + e(w_ij)), returned with entries [i, j, k, l]."""
    Bg = _elastic_B(grid, gamma_value)
    w = grid.gauss_weights[0]
    H = np.empty((6, 6))
    for I in range(6):
        ue = _element_dofs(grid, correctors.fields[I].ravel())
        strain = np.einsum("gIa,ea->egI", Bg, ue) + sym_to_mandel(unit_strain(I))
        stress = np.einsum("eIJ,egJ->egI", grid.coeff, strain)
        avg = np.einsum("g,egI->I", w, stress)
        H[:, I] = avg / np.array([1, 1, 1, math.sqrt(2), math.sqrt(2), math.sqrt(2)])
    A = Tensor4.from_voigt(H.T)
    defects = A.symmetry_defects()
    if defects["major"] > tol:
        raise ValueError(f"homogenized tensor violates major symmetry (relative defect {defects['major']:.3e})")
    return A


assemble_Bhom = assemble_Ahom


def homogenize_elastic(a: float, E1: Tensor4, E2: Tensor4, gamma_value: float, n: int = 64,
                       shear: float = 0.0, workers: int = 1) -> tuple[Tensor4, CorrectorSet, PeriodicCellGrid]:
    grid = build_cell_coefficient(a, E1, E2, n, shear)
    corr = solve_cell_sheared(grid, gamma_value, workers) if shear else solve_cell_elastic(grid, gamma_value, workers)
    return assemble_Ahom(grid, gamma_value, corr), corr, grid


# ---------------------------------------------------------------------------
# scalar analog


@dataclass
class ScalarCorrectors:
    fields: np.ndarray  # (2, n*n)
    residuals: list
    iterations: list


def solve_cell_scalar(grid: PeriodicCellGrid, directions: Sequence[int] = (0, 1)) -> ScalarCorrectors:
    """Zero-mean periodic chi_j with -div(a (grad chi_j + e_j)) = 0."""
    if grid.kind != "scalar":
        raise ValueError("scalar cell solve needs a scalar coefficient grid")
    Bg = np.swapaxes(grid.physical_gradients(), 1, 2)  # (gp, 2, 4)
    loads = [np.eye(2)[j] for j in directions]
    _, _, out = _solve_loads(grid, Bg, loads)
    return ScalarCorrectors(np.stack([u for u, _ in out]), [i.residual for _, i in out],
                            [i.iterations for _, i in out])


def corrector_gradients(grid: PeriodicCellGrid, corr: ScalarCorrectors) -> np.ndarray:
    """Element-centroid gradients of the scalar correctors, shape (2, n*n, 2)."""
    n = grid.n
    g = np.zeros((4, 2))
    for a, (i, j) in enumerate(_LOCAL):
        g[a, 0] = (1 if i else -1) * 0.5 * n
        g[a, 1] = (1 if j else -1) * 0.5 * n
    Sit = np.linalg.inv(_shear_matrix(grid.shear)).T
    nodes = element_nodes(n)
    return np.stack([np.einsum("ea,ax->ex", f[nodes], g @ Sit.T) for f in corr.fields])


def corrector_gradient_at(grid: PeriodicCellGrid, corr: ScalarCorrectors, y: np.ndarray) -> np.ndarray:
    """grad_y chi_j at cell points ``y`` (N, 2) in square coordinates, shape (2, N, 2)."""
    n = grid.n
    y = np.asarray(y, dtype=float)
    z = (y - np.floor(y)) * n
    ij = np.minimum(np.floor(z).astype(int), n - 1)
    s, t = (z - ij).T
    e = ij[:, 0] * n + ij[:, 1]
    nodes = element_nodes(n)[e]
    # bilinear derivative factors per local node (0,0), (1,0), (1,1), (0,1)
    ds = np.stack([-(1 - t), 1 - t, t, -t], axis=-1) * n
    dt = np.stack([-(1 - s), -s, s, 1 - s], axis=-1) * n
    Sit = np.linalg.inv(_shear_matrix(grid.shear)).T
    out = []
    for f in corr.fields:
        v = f[nodes]
        gz = np.stack([np.sum(v * ds, axis=-1), np.sum(v * dt, axis=-1)], axis=-1)
        out.append(gz @ Sit.T)
    return np.stack(out)


def assemble_scalar_hom(grid: PeriodicCellGrid, corr: ScalarCorrectors) -> np.ndarray:
    """a_hom[i, j] = cell average of a (e_j + grad chi_j)_i."""
    Bg = np.swapaxes(grid.physical_gradients(), 1, 2)
    w = grid.gauss_weights[0]
    nodes = element_nodes(grid.n)
    out = np.empty((2, 2))
    for j in range(2):
        grad = np.einsum("gxa,ea->egx", Bg, corr.fields[j][nodes]) + np.eye(2)[j]
        out[:, j] = np.einsum("g,e,egx->x", w, grid.coeff, grad)
    return out


def homogenize_scalar(grid: PeriodicCellGrid) -> tuple[np.ndarray, ScalarCorrectors]:
    corr = solve_cell_scalar(grid)
    return assemble_scalar_hom(grid, corr), corr


def stiffness_matrix(grid: PeriodicCellGrid, gamma_value: float = 0.0) -> sp.csr_matrix:
    """Assembled periodic stiffness (for structural checks)."""
    if grid.kind == "scalar":
        Bg = np.swapaxes(grid.physical_gradients(), 1, 2)
    else:
        Bg = _elastic_B(grid, gamma_value)
    return _assemble(grid, Bg)[0]


# ---------------------------------------------------------------------------
# sampled tensor fields


def lobatto_points(lo: float, hi: float, m: int) -> np.ndarray:
    """Chebyshev-Lobatto points on [lo, hi], ascending."""
    if m == 1:
        return np.array([0.5 * (lo + hi)])
    k = np.arange(m)
    return np.sort(0.5 * (lo + hi) - 0.5 * (hi - lo) * np.cos(np.pi * k / (m - 1)))


@dataclass
class HomogenizedTensorField:
    """Tensors sampled on a tensor grid of coordinates, linearly interpolated.

    ``axes`` lists the sampled coordinate index per grid dimension (``(2,)``
    for A_hom(x3), ``(0, 1, 2)`` for B_hom(x)).
    """

    coords: list
    tensors: np.ndarray
    axes: tuple = (2,)
    volume_fraction: float = float("nan")
    residuals: list = field(default_factory=list)
    grid_n: int = 0
    label: str = "A_hom"
    fractions: list = field(default_factory=list)

    @classmethod
    def constant(cls, E: Tensor4, label: str = "constant") -> "HomogenizedTensorField":
        return cls([np.array([0.0])], E.c[None].copy(), (2,), label=label)

    @property
    def samples(self) -> list[Tensor4]:
        flat = self.tensors.reshape(-1, 3, 3, 3, 3)
        return [Tensor4(c) for c in flat]

    @property
    def sample_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.coords, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def covers(self, lo: float, hi: float, axis: int = 2) -> bool:
        if axis not in self.axes or all(len(c) == 1 for c in self.coords):
            return True
        c = self.coords[self.axes.index(axis)]
        return c[0] <= lo + 1e-12 and c[-1] >= hi - 1e-12

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if all(len(c) == 1 for c in self.coords):
            return np.broadcast_to(self.tensors.reshape(3, 3, 3, 3), (x.shape[0], 3, 3, 3, 3)).copy()
        if len(self.axes) == 1:
            c = self.coords[0]
            t = np.clip(x[:, self.axes[0]], c[0], c[-1])
            flat = self.tensors.reshape(len(c), 81)
            return np.stack([np.interp(t, c, flat[:, q]) for q in range(81)], axis=-1).reshape(-1, 3, 3, 3, 3)
        pts = np.stack([np.clip(x[:, ax], c[0], c[-1]) for ax, c in zip(self.axes, self.coords)], axis=-1)
        shape = tuple(len(c) for c in self.coords)
        kept = [c if len(c) > 1 else np.array([c[0], c[0] + 1.0]) for c in self.coords]
        vals = self.tensors.reshape(shape + (81,))
        for i, c in enumerate(self.coords):
            if len(c) == 1:
                vals = np.concatenate([vals, vals], axis=i)
        interp = RegularGridInterpolator(kept, vals, method="linear")
        return interp(pts).reshape(-1, 3, 3, 3, 3)

    def to_dict(self) -> dict:
        pts = self.sample_points
        out = []
        for q, T in enumerate(self.samples):
            out.append({
                "sample_coordinate": pts[q].tolist() if pts.shape[1] > 1 else float(pts[q, 0]),
                "tensor_voigt_6x6": T.to_voigt().tolist(),
                "volume_fraction": self.fractions[q] if q < len(self.fractions) else self.volume_fraction,
                "residuals": self.residuals[q] if q < len(self.residuals) else [],
                "grid_n": self.grid_n,
            })
        return {"label": self.label, "axes": list(self.axes), "voigt_order": ["11", "22", "33", "23", "13", "12"],
                "coords": [c.tolist() for c in self.coords], "samples": out}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path=None) -> str:
        pts = self.sample_points
        lines = [",".join([f"x{a + 1}" for a in self.axes] + [f"C{I + 1}{J + 1}" for I in range(6) for J in range(6)])]
        for q, T in enumerate(self.samples):
            lines.append(",".join([repr(float(v)) for v in pts[q]] + [repr(float(v)) for v in T.to_voigt().ravel()]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, path) -> "HomogenizedTensorField":
        with open(path) as fh:
            d = json.load(fh)
        coords = [np.asarray(c, dtype=float) for c in d["coords"]]
        T = np.stack([Tensor4.from_voigt(s["tensor_voigt_6x6"]).c for s in d["samples"]])
        shape = tuple(len(c) for c in coords)
        return cls(coords, T.reshape(shape + (3, 3, 3, 3)), tuple(d["axes"]),
                   d["samples"][0].get("volume_fraction", float("nan")),
                   [s.get("residuals", []) for s in d["samples"]], d["samples"][0].get("grid_n", 0), d.get("label", ""),
                   [s.get("volume_fraction", float("nan")) for s in d["samples"]])


def sample_Ahom(a: float, E1: Tensor4, E2: Tensor4, gamma: RotationAngleField, x3_range=(0.0, 1.0),
                samples: int = 9, n: int = 64, workers: int = 1) -> HomogenizedTensorField:
    """A_hom(x3) at Chebyshev-Lobatto heights, one direct cell solve each."""
    xs = lobatto_points(x3_range[0], x3_range[1], samples)
    grid = build_cell_coefficient(a, E1, E2, n)

    def one(t):
        g = float(gamma(t))
        corr = solve_cell_elastic(grid, g)
        return assemble_Ahom(grid, g, corr), corr.residuals

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(one, xs))
    else:
        res = [one(t) for t in xs]
    T = np.stack([r[0].c for r in res])
    return HomogenizedTensorField([xs], T, (2,), grid.volume_fraction, [r[1] for r in res], n, "A_hom",
                                  [grid.volume_fraction] * len(xs))


def sample_Bhom(a: float, E1: Tensor4, E2: Tensor4, gamma: RotationAngleField, coords: Sequence[np.ndarray],
                n: int = 64, workers: int = 1) -> HomogenizedTensorField:
    """B_hom(x) on a tensor grid of points; each sample solves the sheared cell at w(x)."""
    coords = [np.asarray(c, dtype=float) for c in coords]
    mesh = np.stack([m.ravel() for m in np.meshgrid(*coords, indexing="ij")], axis=-1)

    def one(x):
        g = float(gamma(x[2]))
        w = float(shear_value(x[None], gamma)[0])
        grid = build_cell_coefficient(a, E1, E2, n, w)
        corr = solve_cell_sheared(grid, g)
        return assemble_Bhom(grid, g, corr), corr.residuals, grid.volume_fraction

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(one, mesh))
    else:
        res = [one(x) for x in mesh]
    shape = tuple(len(c) for c in coords)
    T = np.stack([r[0].c for r in res]).reshape(shape + (3, 3, 3, 3))
    return HomogenizedTensorField(coords, T, (0, 1, 2), float(np.mean([r[2] for r in res])),
                                  [r[1] for r in res], n, "B_hom", [r[2] for r in res])


def structural_report(T: Tensor4, reuss: Tensor4, voigt: Tensor4, tol: float = 1e-8) -> dict:
    """Symmetry defects, definiteness and Reuss/Voigt sandwich flags of one tensor."""
    d = T.symmetry_defects()
    return {
        **d,
        "symmetric": all(v <= tol for v in d.values()),
        "min_probe_rayleigh": T.min_probe_rayleigh(),
        "positive_definite": T.min_probe_rayleigh() > 0 and T.min_eigenvalue() > 0,
        "reuss_le": quadratic_le(reuss, T),
        "le_voigt": quadratic_le(T, voigt),
    }


def bounds_for(grid: PeriodicCellGrid, E1: Tensor4, E2: Tensor4):
    """Reuss/Voigt tensors at the grid's discrete fibre fraction."""
    return voigt_reuss_bounds(grid.meta.get("a", 0.0), E1, E2, theta=grid.volume_fraction)
