"""Cube coverings of a box domain, parallelepiped sub-coverings and smooth cutoffs."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .fields import TransformationField

_TOL = 1e-10


@dataclass(frozen=True)
class DomainBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape or not 1 <= lo.size <= 3:
            raise ValueError("domain corners must be vectors of equal length 1..3")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("domain must be bounded")
        if np.any(hi <= lo):
            raise ValueError("degenerate domain: all side lengths must be positive")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @classmethod
    def unit(cls, dim: int) -> "DomainBox":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, x, closed: bool = True) -> np.ndarray:
        x = np.atleast_2d(x)
        if closed:
            return np.all((x >= self.lo - _TOL) & (x <= self.hi + _TOL), axis=-1)
        return np.all((x > self.lo) & (x < self.hi), axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lo + rng.random((n, self.dim)) * self.sides


def _floor(v):
    return np.floor(np.asarray(v) + _TOL).astype(int)


def _ceil(v):
    return np.ceil(np.asarray(v) - _TOL).astype(int)


@dataclass(frozen=True, eq=False)
class Covering:
    """Open cubes of side eps**r on the lattice through the origin meeting the domain.

    Cube ``n`` is ``(corner_n, corner_n + side)``; ``anchors`` are the points
    x_n at which slow variables are frozen, ``shifts`` the offsets of the fast
    variable. ``interior`` marks cubes whose closure lies in the closed domain.
    """

    domain: DomainBox
    epsilon: float
    r: float
    side: float
    lattice_lo: np.ndarray
    lattice_shape: tuple
    indices: np.ndarray
    anchors: np.ndarray
    shifts: np.ndarray
    interior: np.ndarray
    anchor_rule: str = "center"
    shift_rule: str = "corner"

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def N_eps(self) -> int:
        return int(self.indices.shape[0])

    @property
    def N_tilde_eps(self) -> int:
        return int(np.count_nonzero(self.interior))

    @property
    def corners(self) -> np.ndarray:
        return self.indices * self.side

    @property
    def remainder_measure(self) -> float:
        """|K^eps|: domain measure not covered by interior cube closures."""
        return max(self.domain.volume - self.N_tilde_eps * self.side ** self.dim, 0.0)

    @cached_property
    def clipped_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.maximum(self.corners, self.domain.lo)
        hi = np.minimum(self.corners + self.side, self.domain.hi)
        return lo, hi

    def locate(self, x) -> np.ndarray:
        """Flat cube number for each point; boundary ties go to the lower cube index."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise ValueError(f"points must have {self.dim} coordinates")
        inside = self.domain.contains(x)
        if not np.all(inside):
            bad = x[~inside][0]
            raise ValueError(f"point {bad.tolist()} lies in no cube of the covering")
        idx = np.floor(x / self.side).astype(int) - self.lattice_lo
        idx = np.clip(idx, 0, np.asarray(self.lattice_shape) - 1)
        return np.ravel_multi_index(tuple(idx.T), self.lattice_shape)

    def cube_of(self, x) -> int:
        return int(self.locate(x)[0])

    def layers(self, axis: int = -1) -> np.ndarray:
        """Layer number of every cube along ``axis`` (the x3 layers for plywood)."""
        return self.indices[:, axis] - self.lattice_lo[axis]

    def to_dict(self) -> dict:
        cubes = [
            {"index": self.indices[n].tolist(),
             "corner": self.corners[n].tolist(),
             "anchor": self.anchors[n].tolist(),
             "shift": self.shifts[n].tolist(),
             "interior": bool(self.interior[n])}
            for n in range(self.N_eps)
        ]
        return {
            "epsilon": self.epsilon,
            "r": self.r,
            "side": self.side,
            "domain": {"lower": list(self.domain.lower), "upper": list(self.domain.upper)},
            "anchor_rule": self.anchor_rule,
            "shift_rule": self.shift_rule,
            "N_eps": self.N_eps,
            "N_tilde_eps": self.N_tilde_eps,
            "remainder_measure": self.remainder_measure,
            "cubes": cubes,
        }

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(self.to_dict(), indent=kw.pop("indent", 1), **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def with_points(self, anchors=None, shifts=None, anchor_rule=None, shift_rule=None) -> "Covering":
        """Copy with replaced anchor and/or shift arrays."""
        a = self.anchors if anchors is None else np.asarray(anchors, dtype=float).reshape(self.anchors.shape)
        s = self.shifts if shifts is None else np.asarray(shifts, dtype=float).reshape(self.shifts.shape)
        return Covering(self.domain, self.epsilon, self.r, self.side, self.lattice_lo,
                        self.lattice_shape, self.indices, a, s, self.interior,
                        anchor_rule or self.anchor_rule, shift_rule or self.shift_rule)


def build_covering(domain: DomainBox, epsilon: float, r: float, *, anchors="center",
                   transform: TransformationField | None = None, shifts="auto",
                   seed: int = 0, share_last_axis: bool = True) -> Covering:
    """Cover ``domain`` by the cubes of side ``epsilon**r`` meeting it.

    anchors: ``"center"`` (centre of cube intersected with the domain),
    ``"corner"``, ``"random"`` (seeded, uniform in cube intersected with the
    domain; with ``share_last_axis`` all cubes of one layer share the last
    coordinate) or an explicit ``(N, d)`` array.

    shifts: ``"auto"`` gives lattice-aligned shifts ``D(x_n) eps k`` when a
    transform is given and the clipped lower corner otherwise; ``"corner"``,
    ``"anchor"``, ``"zero"`` or an explicit array are also accepted.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    side = float(epsilon) ** float(r)
    if np.any(side >= domain.sides):
        raise ValueError(f"cube side {side:.4g} is not smaller than every domain side")
    d = domain.dim

    ilo = _floor(domain.lo / side)
    ihi = _ceil(domain.hi / side) - 1
    shape = tuple(int(v) for v in ihi - ilo + 1)
    grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(ilo, ihi)], indexing="ij")
    indices = np.stack([g.ravel() for g in grids], axis=-1)
    corners = indices * side
    interior = np.all((corners >= domain.lo - _TOL * side)
                      & (corners + side <= domain.hi + _TOL * side), axis=-1)
    clo = np.maximum(corners, domain.lo)
    chi = np.minimum(corners + side, domain.hi)

    if isinstance(anchors, str):
        rule = anchors
        if rule == "center":
            pts = 0.5 * (clo + chi)
        elif rule == "corner":
            pts = clo.copy()
        elif rule == "random":
            rng = np.random.default_rng(seed)
            u = rng.random(indices.shape)
            if share_last_axis and d > 1:
                layer = indices[:, -1] - ilo[-1]
                per_layer = rng.random(shape[-1])
                u[:, -1] = per_layer[layer]
            pts = clo + u * (chi - clo)
        else:
            raise ValueError(f"unknown anchor rule {anchors!r}")
    else:
        rule = "explicit"
        pts = np.asarray(anchors, dtype=float).reshape(indices.shape)

    if isinstance(shifts, str):
        srule = shifts
        if srule == "auto":
            srule = "lattice" if transform is not None else "corner"
        if srule == "lattice":
            if transform is None:
                raise ValueError("lattice-aligned shifts need a transformation field")
            Dn = transform(pts)
            k = np.floor(np.einsum("nij,nj->ni", transform.inv(pts), clo) / epsilon)
            sh = epsilon * np.einsum("nij,nj->ni", Dn, k)
        elif srule == "corner":
            sh = clo.copy()
        elif srule == "anchor":
            sh = pts.copy()
        elif srule == "zero":
            sh = np.zeros_like(pts)
        else:
            raise ValueError(f"unknown shift rule {shifts!r}")
    else:
        srule = "explicit"
        sh = np.asarray(shifts, dtype=float).reshape(indices.shape)

    return Covering(domain, float(epsilon), float(r), side, ilo, shape, indices,
                    pts, sh, interior, rule, srule)


@dataclass(frozen=True)
class CellCovering:
    """Parallelepipeds eps D(x_n)(Y + k) covering one cube of a covering."""

    cube_index: int
    epsilon: float
    D: np.ndarray
    cells: np.ndarray
    enclosed: np.ndarray
    boundary_band_measure: float

    @property
    def I_n_eps(self) -> int:
        return int(self.cells.shape[0])

    @property
    def I_tilde_n_eps(self) -> int:
        return int(np.count_nonzero(self.enclosed))


def _box_vertices(d: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 1.0), repeat=d)))


def build_cell_covering(covering: Covering, cube_index: int, D: TransformationField) -> CellCovering:
    """Parallelepipeds overlapping cube ``cube_index`` with positive measure.

    Overlap is decided exactly with a separating-axis test; the band measure
    |M_n| = side**d - I_tilde * eps**d |det D| follows from the enclosed count.
    """
    if not 0 <= cube_index < covering.N_eps:
        raise IndexError(f"cube {cube_index} not in covering")
    d = covering.dim
    eps = covering.epsilon
    xn = covering.anchors[cube_index]
    M = D(xn)[0]
    det = float(np.linalg.det(M))
    if abs(det) < 1e-14:
        raise ValueError("singular transformation at anchor")
    Minv = np.linalg.inv(M)
    corner = covering.corners[cube_index]
    side = covering.side
    box = corner + side * _box_vertices(d)

    pre = box @ Minv.T / eps
    kmin = np.floor(pre.min(axis=0)) - 1
    kmax = np.ceil(pre.max(axis=0)) + 1
    ks = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(kmin, kmax)],
                              indexing="ij"), axis=-1).reshape(-1, d)
    unit = _box_vertices(d)
    verts = eps * (ks[:, None, :] + unit[None, :, :]) @ M.T  # (K, 2^d, d)

    axes = [np.eye(d)[i] for i in range(d)] + [Minv[i] for i in range(d)]
    if d == 3:
        for i in range(3):
            for j in range(3):
                c = np.cross(np.eye(3)[i], M[:, j])
                if np.linalg.norm(c) > 1e-12:
                    axes.append(c)
    A = np.array([a / np.linalg.norm(a) for a in axes])
    pc = verts @ A.T
    pb = box @ A.T
    overlap = np.minimum(pc.max(axis=1), pb.max(axis=0)) - np.maximum(pc.min(axis=1), pb.min(axis=0))
    tol = 1e-10 * side
    hits = np.all(overlap > tol, axis=1)
    enclosed = np.all((verts >= corner - tol) & (verts <= corner + side + tol), axis=(1, 2))
    enclosed &= hits
    ks, enclosed = ks[hits].astype(int), enclosed[hits]
    band = side ** d - np.count_nonzero(enclosed) * eps ** d * abs(det)
    return CellCovering(cube_index, eps, M, ks, enclosed, float(max(band, 0.0)))


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - u[m] ** 2))
    return out


def _bump_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    um = u[m]
    q = 1.0 - um ** 2
    out[m] = np.exp(-1.0 / q) * (-2.0 * um / q ** 2)
    return out


class _BumpProfile:
    """Normalised 1-D bump c exp(-1/(1-u^2)) and its cumulative integral."""

    def __init__(self, nodes: int = 4001):
        mass, _ = integrate.quad(lambda u: float(_bump(u)), -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)
        self.c = 1.0 / mass
        t = np.linspace(-1.0, 1.0, nodes)
        g, w = np.polynomial.legendre.leggauss(12)
        a, b = t[:-1], t[1:]
        pts = 0.5 * (a[:, None] + b[:, None]) + 0.5 * (b - a)[:, None] * g[None, :]
        panel = 0.5 * (b - a) * (self.c * _bump(pts) @ w)
        F = np.concatenate([[0.0], np.cumsum(panel)])
        F /= F[-1]
        self._spline = CubicHermiteSpline(t, F, self.c * _bump(t))

    def pdf(self, u):
        return self.c * _bump(u)

    def dpdf(self, u):
        return self.c * _bump_prime(u)

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        F = np.clip(self._spline(np.clip(u, -1.0, 1.0)), 0.0, 1.0)
        return np.where(u <= -1.0, 0.0, np.where(u >= 1.0, 1.0, F))


_PROFILE: _BumpProfile | None = None


def bump_profile() -> _BumpProfile:
    global _PROFILE
    if _PROFILE is None:
        _PROFILE = _BumpProfile()
    return _PROFILE


@dataclass(frozen=True, eq=False)
class MollifiedCutoff:
    """Smooth approximations of the interior cube indicators.

    Each cutoff is the mollification, at radius ``eps**rho``, of the cube
    shrunk by ``eps**rho``; it is a tensor product of 1-D profiles. Cubes
    meeting the domain boundary get the zero cutoff.
    """

    covering: Covering
    rho: float
    delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", self.covering.epsilon ** self.rho)

    def _factors(self, x, order: int = 0):
        cov = self.covering
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ids = cov.locate(x)
        prof = bump_profile()
        dl = self.delta
        a = cov.corners[ids] + dl
        b = cov.corners[ids] + cov.side - dl
        ta, tb = (x - a) / dl, (x - b) / dl
        f = prof.cdf(ta) - prof.cdf(tb)
        active = cov.interior[ids]
        out = [f]
        if order >= 1:
            out.append((prof.pdf(ta) - prof.pdf(tb)) / dl)
        if order >= 2:
            out.append((prof.dpdf(ta) - prof.dpdf(tb)) / dl ** 2)
        return active, out

    def __call__(self, x) -> np.ndarray:
        """Sum over cubes of the cutoffs at ``x`` (supports are disjoint)."""
        active, (f,) = self._factors(x)
        return np.where(active, np.prod(f, axis=-1), 0.0)

    def gradient(self, x) -> np.ndarray:
        active, (f, df) = self._factors(x, 1)
        d = f.shape[-1]
        g = np.empty_like(f)
        for i in range(d):
            g[:, i] = df[:, i] * np.prod(np.delete(f, i, axis=1), axis=1)
        return np.where(active[:, None], g, 0.0)

    def hessian(self, x) -> np.ndarray:
        active, (f, df, d2f) = self._factors(x, 2)
        n, d = f.shape
        H = np.empty((n, d, d))
        for i in range(d):
            for j in range(d):
                fac = np.ones(n)
                for k in range(d):
                    if k == i and k == j:
                        fac = fac * d2f[:, k]
                    elif k == i or k == j:
                        fac = fac * df[:, k]
                    else:
                        fac = fac * f[:, k]
                H[:, i, j] = fac
        return np.where(active[:, None, None], H, 0.0)

    def indicator(self, x) -> np.ndarray:
        """Sum of the matching cube indicators (interior cubes only)."""
        x = np.atleast_2d(x)
        return self.covering.interior[self.covering.locate(x)].astype(float)


def mollified_cutoff(covering: Covering, rho: float) -> MollifiedCutoff:
    if not covering.r < rho < 1.0:
        raise ValueError(f"rho must satisfy r < rho < 1 (r={covering.r}, rho={rho})")
    if covering.epsilon ** rho >= 0.5 * covering.side:
        raise ValueError("eps**rho must be smaller than half the cube side")
    return MollifiedCutoff(covering, float(rho))
