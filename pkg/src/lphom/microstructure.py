"""Pointwise fibre and perforation indicators, and voxel export.

Indicators are evaluated lazily on point batches; nothing is stored on a
global voxel grid unless ``export_voxels`` is called.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import RotationAngleField, TransformationField, rotation, shear_value
from .geometry import Covering, DomainBox, build_covering
from .lts import SeparableFunction, eval_Leps0

VARIANTS = ("plywood_lp", "plywood_np", "perforation")


@dataclass(frozen=True, eq=False)
class IndicatorSpec:
    """Microstructure description.

    plywood_lp: fibres of radius ``a`` (cell units) in layers of height eps**r;
    plywood_np: one fibre layer per eps; perforation: balls of radius
    ``radius(x)`` centred in every periodic cell.
    """

    variant: str
    a: float = 0.25
    gamma: RotationAngleField = field(default_factory=RotationAngleField.default)
    r: float = 0.5
    radius: Callable[[np.ndarray], np.ndarray] | None = None
    dim: int = 3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant.startswith("plywood"):
            if not 0.0 <= self.a < 0.5:
                raise ValueError("fibre radius fraction a must lie in [0, 1/2)")
            if self.dim != 3:
                raise ValueError("plywood structures are three-dimensional")
        elif self.radius is None:
            raise ValueError("perforation needs a radius field")

    @classmethod
    def plywood_lp(cls, a=0.25, gamma=None, r=0.5):
        return cls("plywood_lp", a, gamma or RotationAngleField.default(), r)

    @classmethod
    def plywood_np(cls, a=0.25, gamma=None):
        return cls("plywood_np", a, gamma or RotationAngleField.default())

    @classmethod
    def perforation(cls, radius, dim=3):
        if not callable(radius):
            value = float(radius)
            radius = lambda x: np.full(np.atleast_2d(x).shape[0], value)
        return cls("perforation", radius=radius, dim=dim)

    def parameters(self) -> dict:
        out = {"variant": self.variant, "dim": self.dim}
        if self.variant.startswith("plywood"):
            out.update(a=self.a, gamma=self.gamma.name)
            if self.variant == "plywood_lp":
                out["r"] = self.r
        return out


def fibre_cell(a: float) -> SeparableFunction:
    """eta~(y~) = 1 iff |(y~2, y~3) - 1/2| <= a; constant along y~1."""
    def f(x, y):
        return (((y[:, 1] - 0.5) ** 2 + (y[:, 2] - 0.5) ** 2) <= a * a).astype(float)
    return SeparableFunction(f, 3, x_dependent=False, y_axes=(1, 2), smooth_y=False,
                             name=f"fibre(a={a})")


def plywood_coefficient(a: float, E1: float, E2: float) -> SeparableFunction:
    """A~(y~) = E1 eta~ + E2 (1 - eta~) for scalar moduli."""
    eta = fibre_cell(a)
    return SeparableFunction(lambda x, y: E2 + (E1 - E2) * eta.func(x, y), 3, x_dependent=False,
                             y_axes=(1, 2), smooth_y=False, name=f"plywood(E1={E1},E2={E2},a={a})")


def plywood_covering(domain: DomainBox, spec: IndicatorSpec, epsilon: float, anchors="center",
                     seed: int = 0) -> Covering:
    """Covering whose anchors share x3 within each layer, lattice-aligned shifts."""
    return build_covering(domain, epsilon, spec.r, anchors=anchors,
                          transform=TransformationField.plywood(spec.gamma), seed=seed,
                          share_last_axis=True)


def _check_inside(covering_or_domain, x):
    dom = covering_or_domain.domain if isinstance(covering_or_domain, Covering) else covering_or_domain
    if dom is not None and not np.all(dom.contains(x)):
        raise ValueError("point outside the domain")


def plywood_indicator_lp(spec: IndicatorSpec, covering: Covering, epsilon: float, x) -> np.ndarray:
    """Fibre indicator of the locally-periodic plywood, L^eps_0 of eta."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_inside(covering, x)
    D = TransformationField.plywood(spec.gamma)
    return eval_Leps0(fibre_cell(spec.a), D, covering, epsilon, x).astype(np.uint8)


def plywood_indicator_np(spec: IndicatorSpec, epsilon: float, x, domain: DomainBox | None = None) -> np.ndarray:
    """Fibre indicator of the non-periodic plywood (one rotated layer per eps).

    Fibre k has its axis through R_k^-1 eps k along R_k^-1 e1 with
    R_k = R(gamma(eps k3)); only the layer k3 = round(x3/eps) and the nearest
    in-layer fibre can contain x since a < 1/2.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if domain is not None:
        _check_inside(domain, x)
    k3 = np.round(x[:, 2] / epsilon)
    R = rotation(spec.gamma(epsilon * k3))
    z = np.einsum("nij,nj->ni", R, x) / epsilon
    d2 = z[:, 1] - np.round(z[:, 1])
    d3 = x[:, 2] / epsilon - k3
    return (d2 * d2 + d3 * d3 <= spec.a ** 2).astype(np.uint8)


def perforation_cell(radius, dim: int) -> SeparableFunction:
    def f(x, y):
        rho = radius(x)
        return (np.sum((y - 0.5) ** 2, axis=-1) <= rho ** 2).astype(float)
    return SeparableFunction(f, dim, smooth_y=False, name="ball")


def perforation_indicator(spec: IndicatorSpec, epsilon: float, x, covering: Covering) -> np.ndarray:
    """L^eps_0 of the ball indicator |y - 1/2| <= rho(x) on the unit cell (D = I)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_inside(covering, x)
    rho = spec.radius(covering.anchors)
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise ValueError("perforation radius must lie in (0, 1)")
    D = TransformationField.identity(spec.dim)
    return eval_Leps0(perforation_cell(spec.radius, spec.dim), D, covering, epsilon, x).astype(np.uint8)


def laminate_cell(dim: int = 2, axis: int = 1, fraction: float = 0.5) -> SeparableFunction:
    """Layer indicator y_axis < fraction on the unit cell."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("layer fraction must lie in (0, 1)")
    return SeparableFunction(lambda x, y: (y[:, axis] < fraction).astype(float), dim, x_dependent=False,
                             y_axes=(axis,), smooth_y=False, name=f"laminate(axis={axis})")


def periodic_indicator(cell: SeparableFunction, covering: Covering, epsilon: float, x) -> np.ndarray:
    """L^eps_0 of a cell indicator with D = I."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_inside(covering, x)
    D = TransformationField.identity(cell.dim)
    return eval_Leps0(cell, D, covering, epsilon, x).astype(np.uint8)


def perforation_covering(domain: DomainBox, epsilon: float, r: float, anchors="center", seed: int = 0):
    return build_covering(domain, epsilon, r, anchors=anchors,
                          transform=TransformationField.identity(domain.dim), seed=seed)


def indicator(spec: IndicatorSpec, epsilon: float, x, covering: Covering | None = None,
              domain: DomainBox | None = None) -> np.ndarray:
    """Dispatch on ``spec.variant``."""
    if spec.variant == "plywood_np":
        return plywood_indicator_np(spec, epsilon, x, domain)
    if covering is None:
        raise ValueError(f"{spec.variant} needs a covering")
    if spec.variant == "plywood_lp":
        return plywood_indicator_lp(spec, covering, epsilon, x)
    return perforation_indicator(spec, epsilon, x, covering)


# ---------------------------------------------------------------------------
# fibre shift estimate


def cylinder_shift_measure(radius: float, length: float, tau) -> float:
    """Exact |cyl + tau  symmetric-difference  cyl| for a cylinder along x1."""
    tau = np.asarray(tau, dtype=float)
    vol = math.pi * radius ** 2 * length
    ax = max(length - abs(tau[0]), 0.0)
    dist = float(np.hypot(tau[1], tau[2]))
    if dist >= 2 * radius:
        lens = 0.0
    else:
        lens = 2 * radius ** 2 * math.acos(dist / (2 * radius)) - 0.5 * dist * math.sqrt(4 * radius ** 2 - dist ** 2)
    return 2 * vol - 2 * ax * lens


def fiber_shift_bound(radius: float, length: float, tau, resolution: int) -> float:
    """Voxel estimate of ||chi(. + tau) - chi||^2 / (radius * length * |tau|).

    ``resolution`` is the number of voxels across the fibre radius. Raises when
    the voxel error bound exceeds 10% of the measured value.
    """
    tau = np.asarray(tau, dtype=float)
    t = float(np.linalg.norm(tau))
    h = radius / resolution
    lo = np.array([min(0.0, -tau[0]), -radius - max(0.0, tau[1]), -radius - max(0.0, tau[2])]) - h
    hi = np.array([length + max(0.0, -tau[0]), radius + max(0.0, -tau[1]), radius + max(0.0, -tau[2])]) + h
    lo[0], hi[0] = min(lo[0], -abs(tau[0])), max(hi[0], length + abs(tau[0]))
    lo[1:] -= np.abs(tau[1:])
    hi[1:] += np.abs(tau[1:])
    n = np.ceil((hi - lo) / h).astype(int)
    x1 = lo[0] + (np.arange(n[0]) + 0.5) * h
    x2 = lo[1] + (np.arange(n[1]) + 0.5) * h
    x3 = lo[2] + (np.arange(n[2]) + 0.5) * h
    X2, X3 = np.meshgrid(x2, x3, indexing="ij")
    disk0 = X2 ** 2 + X3 ** 2 <= radius ** 2
    disk1 = (X2 + tau[1]) ** 2 + (X3 + tau[2]) ** 2 <= radius ** 2
    ax0 = (x1 >= 0) & (x1 <= length)
    ax1 = (x1 + tau[0] >= 0) & (x1 + tau[0] <= length)
    # the indicator is a product, so count per axial class
    both = np.count_nonzero(ax0 & ax1)
    only0 = np.count_nonzero(ax0 & ~ax1)
    only1 = np.count_nonzero(~ax0 & ax1)
    diff_cells = (both * np.count_nonzero(disk0 ^ disk1)
                  + only0 * np.count_nonzero(disk0) + only1 * np.count_nonzero(disk1))
    measure = diff_cells * h ** 3
    if t == 0.0:
        return 0.0
    area = 2 * math.pi * radius * length + 2 * math.pi * radius ** 2
    voxel_err = 2 * area * h
    if voxel_err > 0.1 * measure:
        need = int(math.ceil(resolution * voxel_err / (0.1 * max(measure, 1e-300))))
        raise ValueError(f"resolution {resolution} too coarse for |tau|={t:.3g}; need about {need}")
    return measure / (radius * length * t)


def fiber_shift_measure(radius: float, length: float, tau, resolution: int) -> float:
    """Symmetric-difference measure itself (voxel count times voxel volume)."""
    t = float(np.linalg.norm(tau))
    if t == 0.0:
        return 0.0
    return fiber_shift_bound(radius, length, tau, resolution) * radius * length * t


# ---------------------------------------------------------------------------
# non-periodic vs locally-periodic plywood


def np_lattice_covering(domain: DomainBox, spec: IndicatorSpec, epsilon: float, r: float) -> Covering:
    """Covering with anchors x_n = R^-1(gamma(eps k3)) eps kappa_n and x~_n = x_n."""
    base = build_covering(domain, epsilon, r)
    c = base.corners + 0.5 * base.side
    k3 = np.round(c[:, 2] / epsilon)
    R = rotation(spec.gamma(epsilon * k3))
    z = np.einsum("nij,nj->ni", R, c) / epsilon
    kappa = np.stack([np.round(z[:, 0]), np.round(z[:, 1]), k3], axis=-1)
    xn = epsilon * np.einsum("nji,nj->ni", R, kappa)
    return base.with_points(anchors=xn, shifts=xn, anchor_rule="np_lattice", shift_rule="anchor")


def sheared_fibre_cell(spec: IndicatorSpec) -> SeparableFunction:
    """theta^(x, W_x y~): fibres on the sheared lattice, radius a about lattice points."""
    a2 = spec.a ** 2

    def f(x, y):
        w = shear_value(x, spec.gamma)
        y2 = y[:, 1] + w * y[:, 2]
        y3 = y[:, 2]
        best = np.full(y.shape[0], np.inf)
        for m3 in (-1.0, 0.0, 1.0, 2.0):
            t3 = y3 - m3
            s = y2 - w * m3
            t2 = s - np.round(s)
            best = np.minimum(best, t2 * t2 + t3 * t3)
        return (best <= a2).astype(float)
    return SeparableFunction(f, 3, x_dependent=True, y_axes=(1, 2), smooth_y=False,
                             name=f"sheared_fibre(a={spec.a})")


def plywood_indicator_lp_sheared(spec: IndicatorSpec, covering: Covering, epsilon: float, x) -> np.ndarray:
    """Locally-periodic approximation of the non-periodic plywood, D = R^-1 W."""
    D = TransformationField.plywood_sheared(spec.gamma)
    return eval_Leps0(sheared_fibre_cell(spec), D, covering, epsilon, x).astype(np.uint8)


def lp_np_discrepancy(spec: IndicatorSpec, epsilon: float, r: float, resolution: int = 1_000_000,
                      domain: DomainBox | None = None, seed: int = 0,
                      return_error: bool = False):
    """Monte-Carlo measure of the set where the np plywood and its lp approximation differ.

    ``resolution`` is the number of uniform samples (seeded). With
    ``return_error`` also returns the binomial standard error.
    """
    if not 2.0 / 3.0 < r < 1.0:
        raise ValueError("r must lie in (2/3, 1) for the discrepancy to vanish")
    domain = domain or DomainBox.unit(3)
    cov = np_lattice_covering(domain, spec, epsilon, r)
    rng = np.random.default_rng(seed)
    hits = 0
    left = int(resolution)
    while left > 0:
        m = min(left, 1 << 19)
        x = domain.sample(m, rng)
        a = plywood_indicator_np(spec, epsilon, x)
        b = plywood_indicator_lp_sheared(spec, cov, epsilon, x)
        hits += int(np.count_nonzero(a != b))
        left -= m
    frac = hits / resolution
    meas = frac * domain.volume
    if return_error:
        return meas, domain.volume * math.sqrt(max(frac * (1 - frac), 1.0 / resolution) / resolution)
    return meas


# ---------------------------------------------------------------------------
# voxel export


def voxelize(spec: IndicatorSpec, epsilon: float, domain: DomainBox, shape, covering: Covering | None = None) -> np.ndarray:
    """Indicator at voxel centres, array of ``shape`` in x1, x2, x3 axis order."""
    shape = tuple(int(s) for s in shape)
    axes = [domain.lower[i] + (np.arange(shape[i]) + 0.5) * domain.sides[i] / shape[i]
            for i in range(domain.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    out = np.empty(pts.shape[0], dtype=np.uint8)
    for s in range(0, pts.shape[0], 1 << 20):
        out[s:s + (1 << 20)] = indicator(spec, epsilon, pts[s:s + (1 << 20)], covering, domain)
    return out.reshape(shape)


def export_voxels(path_stem, voxels: np.ndarray, domain: DomainBox, epsilon: float, spec: IndicatorSpec) -> dict:
    """Write ``<stem>.raw`` (uint8, row-major, x1 slowest) and ``<stem>.json``."""
    voxels = np.ascontiguousarray(voxels, dtype=np.uint8)
    with open(f"{path_stem}.raw", "wb") as fh:
        fh.write(voxels.tobytes(order="C"))
    sidecar = {
        "shape": list(voxels.shape),
        "spacing": [float(s / n) for s, n in zip(domain.sides, voxels.shape)],
        "origin": list(domain.lower),
        "epsilon": epsilon,
        "variant": spec.variant,
        "parameters": spec.parameters(),
        "volume_fraction": float(voxels.mean()),
        "dtype": "uint8",
        "order": "C (x1, x2, x3)",
    }
    with open(f"{path_stem}.json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    return sidecar


def read_voxels(path_stem) -> tuple[np.ndarray, dict]:
    with open(f"{path_stem}.json") as fh:
        meta = json.load(fh)
    data = np.fromfile(f"{path_stem}.raw", dtype=np.uint8).reshape(meta["shape"])
    return data, meta
