"""Locally-periodic approximation operators and their quadrature checks.

Functions psi(x, y) that are periodic on the deformed cells Y_x = D(x) Y are
represented through psi~(x, y~) on the unit cell Y with y = D(x) y~. The
operators freeze D (and, for ``eval_Leps0``, the slow variable) at the anchor
point of the cube of the covering containing x.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from .fields import TransformationField
from .geometry import Covering, DomainBox, MollifiedCutoff, build_covering


@dataclass(frozen=True, eq=False)
class SeparableFunction:
    """psi~(x, y~), periodic in y~ on the unit cell.

    ``func(x, y)`` takes point batches of shape ``(N, d)`` and returns ``(N,)``.
    ``y_axes`` lists the fast coordinates the function actually depends on;
    the remaining ones are integrated out trivially.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim: int
    grad_y: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    x_dependent: bool = True
    y_axes: tuple | None = None
    smooth_y: bool = True
    lipschitz_x: float | None = None
    name: str = "psi"

    def __call__(self, x, y) -> np.ndarray:
        return self.func(np.atleast_2d(x), np.atleast_2d(y))

    @property
    def fast_axes(self) -> tuple:
        return tuple(range(self.dim)) if self.y_axes is None else tuple(self.y_axes)

    def check_periodic(self, rng: np.random.Generator, n: int = 200, tol: float = 1e-12) -> float:
        x = rng.random((n, self.dim))
        y = rng.random((n, self.dim))
        k = rng.integers(-3, 4, size=(n, self.dim))
        defect = float(np.max(np.abs(self(x, y + k) - self(x, y))))
        if defect > tol:
            raise ValueError(f"{self.name} is not unit-cell periodic (defect {defect:.3e})")
        return defect

    def check_gradient(self, rng: np.random.Generator, n: int = 100, h: float = 1e-6,
                       tol: float = 1e-6) -> float:
        if self.grad_y is None:
            raise ValueError(f"{self.name} has no fast-variable gradient")
        x = rng.random((n, self.dim))
        y = rng.random((n, self.dim))
        g = self.grad_y(x, y)
        worst = 0.0
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            fd = (self(x, y + e) - self(x, y - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - g[:, i]))))
        if worst > tol:
            raise ValueError(f"gradient of {self.name} mismatches finite differences by {worst:.3e}")
        return worst


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor-product composite rule over a box.

    ``rule="midpoint"`` puts one node in each of the ``n`` cells per axis;
    ``rule="gauss"`` uses ``order`` Gauss-Legendre nodes per cell.
    """

    domain: DomainBox
    n: tuple
    rule: str = "midpoint"
    order: int = 1

    def __post_init__(self):
        if len(self.n) != self.domain.dim:
            raise ValueError("one cell count per axis required")
        if self.rule not in ("midpoint", "gauss"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.rule == "midpoint":
            object.__setattr__(self, "order", 1)

    @classmethod
    def for_epsilon(cls, domain: DomainBox, epsilon: float, per_eps: int = 8,
                    rule: str = "midpoint", order: int = 1) -> "QuadratureGrid":
        h = epsilon / per_eps
        n = tuple(int(math.ceil(s / h - 1e-9)) for s in domain.sides)
        return cls(domain, n, rule, order)

    @property
    def h(self) -> float:
        return float(np.max(self.domain.sides / np.asarray(self.n)))

    def _axis(self, i):
        lo, hi, m = self.domain.lower[i], self.domain.upper[i], self.n[i]
        edges = np.linspace(lo, hi, m + 1)
        width = (hi - lo) / m
        if self.rule == "midpoint":
            return 0.5 * (edges[:-1] + edges[1:]), np.full(m, width)
        g, w = np.polynomial.legendre.leggauss(self.order)
        pts = (edges[:-1, None] + 0.5 * width * (g[None, :] + 1.0)).ravel()
        return pts, np.tile(0.5 * width * w, m)

    @property
    def axes(self):
        return [self._axis(i) for i in range(self.domain.dim)]

    @property
    def shape(self) -> tuple:
        return tuple(m * self.order for m in self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def chunks(self, max_points: int = 1 << 20) -> Iterator[tuple[slice, np.ndarray, np.ndarray]]:
        """Yield ``(flat_slice, points, weights)`` in C order."""
        axes = self.axes
        shape = self.shape
        total = self.size
        for start in range(0, total, max_points):
            stop = min(start + max_points, total)
            flat = np.arange(start, stop)
            idx = np.unravel_index(flat, shape)
            pts = np.stack([axes[i][0][idx[i]] for i in range(len(shape))], axis=-1)
            w = np.ones(stop - start)
            for i in range(len(shape)):
                w = w * axes[i][1][idx[i]]
            yield slice(start, stop), pts, w

    def points(self) -> np.ndarray:
        return np.concatenate([p for _, p, _ in self.chunks()], axis=0)

    def weights(self) -> np.ndarray:
        return np.concatenate([w for _, _, w in self.chunks()])

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray], max_points: int = 1 << 20) -> float:
        """Sum of w * fn(points); per-chunk pairwise sums combined with fsum."""
        parts = [float(np.sum(w * fn(p))) for _, p, w in self.chunks(max_points)]
        return math.fsum(parts)

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        out = np.empty(self.size)
        for sl, p, _ in self.chunks():
            out[sl] = fn(p)
        return out


def fit_order(eps: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(eps); NaN if undefined."""
    e = np.asarray(eps, dtype=float)
    err = np.abs(np.asarray(errors, dtype=float))
    m = err > 0
    if np.count_nonzero(m) < 2:
        return float("nan")
    return float(np.polyfit(np.log(e[m]), np.log(err[m]), 1)[0])


def asymptotic_order(eps, errors) -> float:
    """Fitted order with the first (pre-asymptotic) point dropped when >= 5 points."""
    eps, errors = list(eps), list(errors)
    if len(eps) >= 5:
        eps, errors = eps[1:], errors[1:]
    return fit_order(eps, errors)


@dataclass
class ConvergenceRecord:
    epsilons: list
    measured: list
    reference: float
    label: str = ""
    reference_error: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.epsilons, dtype=float)
        if e.size > 1 and not np.all(np.diff(e) < 0):
            raise ValueError("epsilon schedule must be strictly decreasing")

    @property
    def errors(self) -> list:
        return [abs(m - self.reference) for m in self.measured]

    @property
    def relative_errors(self) -> list:
        scale = abs(self.reference) if self.reference != 0 else 1.0
        return [e / scale for e in self.errors]

    @property
    def fitted_order(self) -> float:
        return asymptotic_order(self.epsilons, self.errors)

    def running_orders(self) -> list:
        out = []
        for i in range(len(self.epsilons)):
            lo = 1 if i >= 2 else 0
            out.append(fit_order(self.epsilons[lo:i + 1], self.errors[lo:i + 1]) if i >= 1 else float("nan"))
        return out

    def strictly_decreasing(self, last: int | None = None) -> bool:
        err = np.asarray(self.errors)
        if last is not None:
            err = err[-last:]
        return bool(np.all(np.diff(err) < 0))

    def to_dict(self) -> dict:
        return {"label": self.label, "epsilon": list(self.epsilons), "measured": list(self.measured),
                "reference": self.reference, "abs_error": self.errors,
                "fitted_order": self.fitted_order, "reference_error": self.reference_error,
                **({"extra": self.extra} if self.extra else {})}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["epsilon", "measured", "reference", "abs_error", "fitted_order_running"])
        for row in zip(self.epsilons, self.measured, [self.reference] * len(self.measured),
                       self.errors, self.running_orders()):
            wr.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@lru_cache(maxsize=64)
def _frames(covering: Covering, D: TransformationField) -> np.ndarray:
    return D.inv(covering.anchors)


def _fast_variable(D, covering, x, ids):
    Dinv = _frames(covering, D)[ids]
    y = np.einsum("nij,nj->ni", Dinv, x - covering.shifts[ids]) / covering.epsilon
    return y - np.floor(y)


def _check_eps(covering, epsilon):
    if epsilon is not None and not math.isclose(epsilon, covering.epsilon, rel_tol=1e-12):
        raise ValueError(f"epsilon {epsilon} does not match the covering ({covering.epsilon})")


def eval_Leps(psi: SeparableFunction, D: TransformationField, covering: Covering,
              epsilon: float | None, x) -> np.ndarray:
    """psi~(x, D(x_n)^-1 (x - x~_n) / eps) on the cube n containing x."""
    _check_eps(covering, epsilon)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ids = covering.locate(x)
    return psi.func(x, _fast_variable(D, covering, x, ids))


def eval_Leps0(psi: SeparableFunction, D: TransformationField, covering: Covering,
               epsilon: float | None, x) -> np.ndarray:
    """As ``eval_Leps`` with the slow argument frozen at the anchor x_n."""
    _check_eps(covering, epsilon)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ids = covering.locate(x)
    return psi.func(covering.anchors[ids], _fast_variable(D, covering, x, ids))


def eval_Leps_rho(psi: SeparableFunction, D: TransformationField, covering: Covering,
                  cutoff: MollifiedCutoff, epsilon: float | None, x) -> np.ndarray:
    """Smooth version: the cube indicator replaced by its mollified cutoff."""
    if cutoff.covering is not covering:
        raise ValueError("cutoff was built on a different covering")
    return eval_Leps(psi, D, covering, epsilon, x) * cutoff(x)


def eval_Leps_grad(psi: SeparableFunction, D: TransformationField, covering: Covering,
                   epsilon: float | None, x) -> np.ndarray:
    """L^eps of grad_y psi = D(x)^-T grad_y~ psi~, shape ``(N, d)``."""
    if psi.grad_y is None:
        raise ValueError(f"{psi.name} has no fast-variable gradient")
    _check_eps(covering, epsilon)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ids = covering.locate(x)
    g = psi.grad_y(x, _fast_variable(D, covering, x, ids))
    return np.einsum("nji,nj->ni", D.inv(x), g)


# ---------------------------------------------------------------------------
# cell averages


def _unit_rule(m: int, smooth: bool):
    if smooth:
        g, w = np.polynomial.legendre.leggauss(m)
        return 0.5 * (g + 1.0), 0.5 * w
    return (np.arange(m) + 0.5) / m, np.full(m, 1.0 / m)


def _tensor(rules):
    pts = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1).reshape(-1, len(rules))
    w = np.ones(1)
    for r in rules:
        w = np.multiply.outer(w, r[1]).ravel()
    return pts, w


def cell_average(values: Callable[[np.ndarray, np.ndarray], np.ndarray], x: np.ndarray, dim: int,
                 axes: Sequence[int], smooth: bool, per_axis: int | None = None) -> np.ndarray:
    """Average over the unit cell of ``values(x, y)`` for each row of ``x``.

    Smooth integrands use Gauss-Legendre (64 nodes per axis by default),
    discontinuous ones the midpoint rule (1024 per axis in 1-2 axes).
    """
    axes = tuple(axes)
    x = np.atleast_2d(x)
    if not axes:
        y = np.zeros((x.shape[0], dim))
        return values(x, y)
    if per_axis is None:
        per_axis = 64 if smooth else (1024 if len(axes) <= 2 else 128)
    pts, w = _tensor([_unit_rule(per_axis, smooth)] * len(axes))
    out = np.empty(x.shape[0])
    block = max(1, (1 << 21) // pts.shape[0])
    for s in range(0, x.shape[0], block):
        xs = x[s:s + block]
        xx = np.repeat(xs, pts.shape[0], axis=0)
        yy = np.full((xx.shape[0], dim), 0.5)
        yy[:, axes] = np.tile(pts, (xs.shape[0], 1))
        v = values(xx, yy).reshape(xs.shape[0], -1)
        out[s:s + block] = v @ w
    return out


def two_scale_reference(values, domain: DomainBox, dim: int, axes, smooth: bool,
                        x_dependent: bool = True, x_panels: int | None = None,
                        x_order: int = 8, per_axis: int | None = None) -> tuple[float, float]:
    """(integral over domain of the cell average, error estimate).

    The estimate compares against a rule with half the cell resolution.
    """
    if not x_dependent:
        xs = domain.lo[None, :] + 0.5 * domain.sides[None, :]
        full = float(cell_average(values, xs, dim, axes, smooth, per_axis)[0])
        m = per_axis or (64 if smooth else (1024 if len(tuple(axes)) <= 2 else 128))
        half = float(cell_average(values, xs, dim, axes, smooth, max(m // 2, 2))[0])
        return domain.volume * full, domain.volume * abs(full - half)
    if x_panels is None:
        x_panels = 32 if dim == 1 else (8 if dim == 2 else 2)
    grid = QuadratureGrid(domain, (x_panels,) * dim, "gauss", x_order)
    xs, wx = grid.points(), grid.weights()
    if per_axis is None and smooth:
        budget = 4_000_000 // max(xs.shape[0], 1)
        per_axis = int(max(8, min(64, budget ** (1.0 / max(len(tuple(axes)), 1)))))
    full = float(wx @ cell_average(values, xs, dim, axes, smooth, per_axis))
    m = per_axis or (1024 if len(tuple(axes)) <= 2 else 128)
    half = float(wx @ cell_average(values, xs, dim, axes, smooth, max(m // 2, 2)))
    return full, abs(full - half)


def _power(v, p, signed):
    if v.ndim == 2:
        v = np.linalg.norm(v, axis=-1)
        signed = False
    if signed:
        return v ** p
    return np.abs(v) ** p


def _grid_for(grid, domain, eps, per_eps=8):
    if grid is None:
        return QuadratureGrid.for_epsilon(domain, eps, per_eps)
    if callable(grid) and not isinstance(grid, QuadratureGrid):
        grid = grid(eps)
    if grid.h > eps / per_eps * (1 + 1e-9):
        need = tuple(int(math.ceil(s * per_eps / eps)) for s in grid.domain.sides)
        raise ValueError(f"quadrature grid under-resolves eps={eps:g}: spacing {grid.h:.3g} > eps/{per_eps}; "
                         f"need at least {need} cells per axis")
    return grid


def _verify(kind, psi, D, p, schedule, grid, domain, r, anchors, seed, signed, label):
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if signed is None:
        signed = p == 1 and kind != "grad"
    if kind == "grad" and psi.grad_y is None:
        raise ValueError(f"{psi.name} has no fast-variable gradient")
    schedule = [float(e) for e in schedule]
    measured = []
    for eps in schedule:
        g = _grid_for(grid, domain, eps)
        cov = build_covering(domain, eps, r, anchors=anchors, transform=D, seed=seed)
        if kind == "mean":
            fn = lambda x, c=cov: _power(eval_Leps(psi, D, c, None, x), p, signed)
        elif kind == "frozen":
            fn = lambda x, c=cov: _power(eval_Leps0(psi, D, c, None, x), p, signed)
        else:
            fn = lambda x, c=cov: _power(eval_Leps_grad(psi, D, c, None, x), p, signed)
        measured.append(g.integrate(fn))

    if kind == "grad":
        def values(x, y):
            gy = psi.grad_y(x, y)
            return _power(np.einsum("nji,nj->ni", D.inv(x), gy), p, False)
    else:
        def values(x, y):
            return _power(psi.func(x, y), p, signed)
    xdep = psi.x_dependent or (kind == "grad" and D.name not in ("identity", "constant"))
    ref, ref_err = two_scale_reference(values, domain, psi.dim, psi.fast_axes, psi.smooth_y, xdep)
    return ConvergenceRecord(schedule, measured, ref, label or f"{kind}:{psi.name}:p={p}", ref_err,
                             {"r": r, "anchors": anchors if isinstance(anchors, str) else "explicit"})


def verify_mean_convergence(psi, D, p, schedule, grid=None, *, domain: DomainBox | None = None,
                            r: float = 0.5, anchors="center", seed: int = 0, signed=None,
                            label: str = "") -> ConvergenceRecord:
    """Integral of |L^eps psi|^p against the two-scale reference along ``schedule``.

    ``p=1`` integrates the signed value unless ``signed=False``. ``grid`` may
    be a fixed grid, a callable eps -> grid, or None (8 midpoint cells per eps).
    """
    domain = domain or DomainBox.unit(psi.dim)
    return _verify("mean", psi, D, p, schedule, grid, domain, r, anchors, seed, signed, label)


def verify_frozen_convergence(psi, D, p, schedule, grid=None, *, domain: DomainBox | None = None,
                              r: float = 0.5, anchors="center", seed: int = 0, signed=None,
                              label: str = "") -> ConvergenceRecord:
    domain = domain or DomainBox.unit(psi.dim)
    return _verify("frozen", psi, D, p, schedule, grid, domain, r, anchors, seed, signed, label)


def verify_gradient_convergence(psi, D, p, schedule, grid=None, *, domain: DomainBox | None = None,
                                r: float = 0.5, anchors="center", seed: int = 0,
                                label: str = "") -> ConvergenceRecord:
    """Integral of |L^eps grad_y psi|^p with grad_y psi = D^-T grad_y~ psi~."""
    domain = domain or DomainBox.unit(psi.dim)
    return _verify("grad", psi, D, p, schedule, grid, domain, r, anchors, seed, False, label)


def lts_pairing(u_samples, psi: SeparableFunction, D: TransformationField, covering: Covering,
                epsilon: float | None, grid: QuadratureGrid) -> float:
    """Quadrature of u * L^eps psi with u given at the grid nodes (or as a callable)."""
    _check_eps(covering, epsilon)
    _grid_for(grid, grid.domain, covering.epsilon)
    if callable(u_samples):
        u_samples = grid.sample(u_samples)
    u = np.asarray(u_samples, dtype=float).ravel()
    if u.size != grid.size:
        raise ValueError(f"u has {u.size} samples but the grid has {grid.size} nodes")
    parts = []
    for sl, pts, w in grid.chunks():
        parts.append(float(np.sum(w * u[sl] * eval_Leps(psi, D, covering, None, pts))))
    return math.fsum(parts)


def strong_lts_check(u_schedule, limit: SeparableFunction, D: TransformationField, grid=None, *,
                     domain: DomainBox | None = None, tol: float = 1e-2,
                     label: str = "strong") -> tuple[bool, ConvergenceRecord]:
    """Norm criterion lim ||u^eps||^2 = integral of the cell average of |u|^2.

    ``u_schedule`` is a sequence of ``(eps, u)`` with ``u`` a callable on points.
    Passes when the relative error at the finest eps is below ``tol`` and the
    errors do not grow over the last three schedule points.
    """
    domain = domain or DomainBox.unit(limit.dim)
    eps_list, norms = [], []
    for eps, u in u_schedule:
        g = _grid_for(grid, domain, eps)
        norms.append(g.integrate(lambda x: np.asarray(u(x)) ** 2))
        eps_list.append(float(eps))
    ref, ref_err = two_scale_reference(lambda x, y: limit.func(x, y) ** 2, domain, limit.dim,
                                       limit.fast_axes, limit.smooth_y, limit.x_dependent)
    rec = ConvergenceRecord(eps_list, norms, ref, label, ref_err)
    errs = np.asarray(rec.errors)
    tail = errs[-3:]
    ok = bool(errs[-1] <= tol * max(1.0, abs(ref)) and np.all(np.diff(tail) <= tol * max(1.0, abs(ref))))
    rec.extra["passed"] = ok
    return ok, rec
