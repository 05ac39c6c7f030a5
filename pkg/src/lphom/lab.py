"""End-to-end convergence studies and their reports.

Every pass/fail flag in a report is stored together with the rule that
produced it, so ``StudyReport.recompute_flags`` re-derives the flags from the
stored rows alone.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .cell import corrector_gradient_at, disk_cell, homogenize_scalar, laminate_cell as laminate_grid
from .fields import RotationAngleField, TransformationField
from .geometry import DomainBox, build_covering, mollified_cutoff
from .lts import (ConvergenceRecord, QuadratureGrid, SeparableFunction, eval_Leps_rho, fit_order,
                  verify_frozen_convergence, verify_gradient_convergence, verify_mean_convergence)
from .macro import BoundaryData, MacroMesh, MacroSolution, solve_direct_micro_scalar, solve_macro_scalar
from .microstructure import (IndicatorSpec, laminate_cell, lp_np_discrepancy, perforation_covering,
                             perforation_indicator, periodic_indicator, plywood_coefficient)

log = logging.getLogger(__name__)

KINDS = ("lemma_suite", "homog_error", "corrector_gradient", "lp_np_trend")


@dataclass
class StudySpec:
    kind: str
    schedule: list
    params: dict = field(default_factory=dict)
    resolutions: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    def validate(self) -> "StudySpec":
        if self.kind not in KINDS:
            raise ValueError(f"study kind must be one of {KINDS}, got {self.kind!r}")
        s = [float(e) for e in self.schedule]
        if len(s) < 3:
            raise ValueError("schedule needs at least 3 epsilons")
        if not all(0 < e <= 1 for e in s) or not all(b < a for a, b in zip(s, s[1:])):
            raise ValueError("schedule must be strictly decreasing in (0, 1]")
        if self.kind in ("homog_error", "corrector_gradient"):
            n = int(self.resolutions.get("fine_n", 512))
            per = int(self.resolutions.get("per_period", 8))
            if n * min(s) < per:
                raise ValueError(f"fine mesh {n} under-resolves eps={min(s):g}; need at least "
                                 f"{int(math.ceil(per / min(s)))} elements per axis")
        if self.kind == "lp_np_trend":
            for r in self.params.get("r_values", [0.8]):
                if not 2.0 / 3.0 < float(r) < 1.0:
                    raise ValueError(f"r={r} outside (2/3, 1)")
        return self

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "output"}

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# flag rules


def _column(rows, case, col):
    sel = [r for r in rows if r["case"] == case]
    return [r["epsilon"] for r in sel], [r[col] for r in sel]


def evaluate_rule(rows: list, rule: dict) -> bool:
    """Evaluate one flag rule against report rows."""
    eps, v = _column(rows, rule["case"], rule["column"])
    v = np.asarray(v, dtype=float)
    kind = rule["kind"]
    if v.size == 0:
        return False
    if kind == "decreasing":
        tail = v[-rule.get("last", len(v)):]
        # an exactly reproduced limit has nothing left to decrease
        if np.all(np.abs(tail) <= rule.get("exact_below", 0.0)):
            return True
        return bool(np.all(np.diff(tail) < 0))
    if kind == "last_le":
        return bool(abs(v[-1]) <= rule["bound"])
    if kind == "all_le":
        return bool(np.all(np.abs(v) <= rule["bound"]))
    if kind == "all_lt_column":
        _, w = _column(rows, rule["case"], rule["other"])
        return bool(np.all(v < np.asarray(w, dtype=float)))
    if kind == "all_le_column":
        _, w = _column(rows, rule["case"], rule["other"])
        return bool(np.all(v <= rule.get("factor", 1.0) * np.asarray(w, dtype=float)))
    if kind == "ratio_le":
        return bool(np.max(v) / np.min(v) <= rule["bound"])
    if kind == "slope_gt":
        return bool(fit_order(eps, v) > rule["bound"])
    if kind == "slope_ge":
        return bool(fit_order(eps, v) >= rule["bound"])
    if kind == "slope_order":
        eps2, w = _column(rows, rule["other_case"], rule["column"])
        return bool(fit_order(eps2, w) > fit_order(eps, v))
    raise ValueError(f"unknown rule kind {kind!r}")


@dataclass
class StudyReport:
    kind: str
    rows: list
    rules: dict
    flags: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)
    observations: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.flags:
            self.flags = self.recompute_flags()

    def recompute_flags(self) -> dict:
        return {name: evaluate_rule(self.rows, rule) for name, rule in self.rules.items()}

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    @property
    def cases(self) -> list:
        out = []
        for r in self.rows:
            if r["case"] not in out:
                out.append(r["case"])
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "passed": self.passed, "flags": self.flags, "rules": self.rules,
                "orders": self.orders, "observations": self.observations, "provenance": self.provenance,
                "rows": self.rows}

    def to_json(self, path=None) -> str:
        text = json.dumps(_plain(self.to_dict()), indent=1, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, path) -> "StudyReport":
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["kind"], d["rows"], d["rules"], d["flags"], d["orders"], d["observations"], d["provenance"])

    def columns(self) -> list:
        cols = ["case", "epsilon"]
        for r in self.rows:
            cols += [k for k in r if k not in cols]
        return cols

    def to_csv(self, path=None) -> str:
        cols = self.columns()
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in self.rows:
            wr.writerow([_fmt(r.get(c, "")) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def write_plot_data(self, directory) -> list:
        """One CSV per case, columns epsilon followed by every numeric column (log-log ready)."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for case in self.cases:
            sel = [r for r in self.rows if r["case"] == case]
            cols = ["epsilon"] + [k for k in sel[0] if k not in ("case", "epsilon")
                                  and isinstance(sel[0][k], (int, float))]
            path = os.path.join(directory, f"{self.kind}_{_safe(case)}.csv")
            with open(path, "w") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(cols)
                for r in sel:
                    wr.writerow([_fmt(r[c]) for c in cols])
            paths.append(path)
        return paths

    def summary_lines(self) -> list:
        return [f"{'PASS' if ok else 'FAIL'} {self.kind}:{name}" for name, ok in self.flags.items()]


def _safe(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in s)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def _provenance(spec: StudySpec) -> dict:
    return {"config_hash": spec.config_hash(), "seed": spec.seed, "schedule": [float(e) for e in spec.schedule]}


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------------------
# lemma suite


def worked_example() -> tuple[SeparableFunction, TransformationField]:
    """psi~(x, y~) = x + sin(2 pi y~) with D(x) = exp(x) on (0, 1)."""
    psi = SeparableFunction(lambda x, y: x[:, 0] + np.sin(2 * np.pi * y[:, 0]), 1,
                            grad_y=lambda x, y: (2 * np.pi * np.cos(2 * np.pi * y[:, 0]))[:, None],
                            lipschitz_x=1.0, name="worked")
    return psi, TransformationField.exponential_1d()


def _records_to_rows(rec: ConvergenceRecord, case: str) -> list:
    rows = []
    scale = abs(rec.reference) if rec.reference != 0 else 1.0
    for e, m in zip(rec.epsilons, rec.measured):
        rows.append({"case": case, "epsilon": float(e), "measured": float(m), "reference": float(rec.reference),
                     "error": abs(float(m) - rec.reference), "rel_error": abs(float(m) - rec.reference) / scale})
    return rows


def _mollified_record(psi, D, schedule, r, rho, ref, domain) -> ConvergenceRecord:
    vals = []
    for eps in schedule:
        cov = build_covering(domain, eps, r, transform=D)
        cut = mollified_cutoff(cov, rho)
        grid = QuadratureGrid.for_epsilon(domain, eps, 8)
        vals.append(grid.integrate(lambda x: eval_Leps_rho(psi, D, cov, cut, None, x) ** 2))
    return ConvergenceRecord(list(schedule), vals, ref, "mollified")


def run_lemma_suite(spec: StudySpec, workers: int = 1) -> StudyReport:
    """Worked example (L^eps, L^eps_0, L^eps_rho, p = 1, 2), y-independent control,
    plywood coefficient (p = 1, 2) and gradient cases."""
    spec.validate()
    p = spec.params
    tol = float(p.get("tolerance", 1e-2))
    r = float(p.get("r", 0.5))
    schedule = [float(e) for e in spec.schedule]
    ply_sched = [float(e) for e in p.get("plywood_schedule", [1 / 8, 1 / 16, 1 / 32])]
    grad2d_sched = [float(e) for e in p.get("gradient2d_schedule", [1 / 8, 1 / 16, 1 / 32, 1 / 64])]
    cases = p.get("cases", ["worked_p2", "worked_p1", "worked_frozen_p2", "worked_mollified_p2", "control",
                            "plywood_p1", "plywood_p2", "gradient_exp", "gradient_sin2d"])
    psi, D = worked_example()
    one = DomainBox.unit(1)

    def run(case):
        log.info("lemma case %s", case)
        if case == "worked_p2":
            return verify_mean_convergence(psi, D, 2, schedule, r=r, label=case)
        if case == "worked_p1":
            return verify_mean_convergence(psi, D, 1, schedule, r=r, label=case)
        if case == "worked_frozen_p2":
            return verify_frozen_convergence(psi, D, 2, schedule, r=r, label=case)
        if case == "worked_mollified_p2":
            rho = float(p.get("rho", 0.75))
            return _mollified_record(psi, D, schedule, r, rho, 5.0 / 6.0, one)
        if case == "control":
            # y-independent psi: L^eps psi = psi, compared on the same quadrature grid
            ctrl = SeparableFunction(lambda x, y: x[:, 0] ** 2, 1, y_axes=(), name="control")
            rec = verify_mean_convergence(ctrl, D, 2, schedule, r=r, label=case)
            direct = [QuadratureGrid.for_epsilon(one, e, 8).integrate(lambda x: x[:, 0] ** 4) for e in schedule]
            rec.extra["same_grid"] = direct
            return rec
        if case in ("plywood_p1", "plywood_p2"):
            E1, E2, a = float(p.get("E1", 1.0)), float(p.get("E2", 2.0)), float(p.get("a", 0.25))
            Dp = TransformationField.plywood(RotationAngleField.default())
            q = 1 if case.endswith("p1") else 2
            return verify_frozen_convergence(plywood_coefficient(a, E1, E2), Dp, q, ply_sched, r=r,
                                             domain=DomainBox.unit(3), label=case)
        if case == "gradient_exp":
            return verify_gradient_convergence(psi, D, 2, schedule, r=r, label=case)
        if case == "gradient_sin2d":
            s2 = SeparableFunction(lambda x, y: np.sin(2 * np.pi * y[:, 0]), 2,
                                   grad_y=lambda x, y: np.stack([2 * np.pi * np.cos(2 * np.pi * y[:, 0]),
                                                                 0 * y[:, 1]], axis=-1),
                                   x_dependent=False, y_axes=(0,), name="sin2d")
            return verify_gradient_convergence(s2, TransformationField.identity(2), 2, grad2d_sched, r=r,
                                               domain=DomainBox.unit(2), label=case)
        raise ValueError(f"unknown lemma case {case!r}")

    records = _map(run, cases, workers)
    rows, rules, orders, obs = [], {}, {}, {}
    exact = {"worked_p2": 5.0 / 6.0, "worked_frozen_p2": 5.0 / 6.0, "worked_mollified_p2": 5.0 / 6.0,
             "worked_p1": 0.5, "gradient_exp": math.pi ** 2 * (1 - math.exp(-2.0)),
             "gradient_sin2d": 2 * math.pi ** 2}
    for case, rec in zip(cases, records):
        if case in exact:
            obs[f"{case}:quadrature_reference"] = rec.reference
            rec = ConvergenceRecord(rec.epsilons, rec.measured, exact[case], case, rec.reference_error)
        new = _records_to_rows(rec, case)
        if case == "control":
            for row, d in zip(new, rec.extra["same_grid"]):
                row.update(reference=d, error=abs(row["measured"] - d), rel_error=abs(row["measured"] - d) / d)
            rows += new
            rules[f"{case}:exact"] = {"kind": "all_le", "case": case, "column": "error", "bound": 1e-12}
            continue
        rows += new
        orders[case] = rec.fitted_order
        rules[f"{case}:decreasing_last3"] = {"kind": "decreasing", "case": case, "column": "error", "last": 3,
                                             "exact_below": 1e-12}
        if case == "worked_mollified_p2":
            # the cutoff band removes a volume fraction of order eps^(rho - r)
            obs[f"{case}:band_rate_rho-r"] = float(p.get("rho", 0.75)) - r
            continue
        rules[f"{case}:tolerance"] = {"kind": "last_le", "case": case, "column": "rel_error", "bound": tol}
    return StudyReport("lemma_suite", rows, rules, orders=orders, observations=obs, provenance=_provenance(spec))


# ---------------------------------------------------------------------------
# homogenization error


def _radius_field(p: dict) -> Callable[[np.ndarray], np.ndarray]:
    r0, r1 = float(p.get("radius0", 0.2)), float(p.get("radius1", 0.15))
    return lambda x: r0 + r1 * np.atleast_2d(x)[:, 0]


def _scalar_cell_data(p: dict, n: int):
    """(a_hom per element callable, gradient-of-corrector callable, observations)."""
    a1, a2 = float(p.get("a1", 1.0)), float(p.get("a2", 4.0))
    coeff = p.get("coefficient", "laminate")
    if coeff in ("laminate", "constant"):
        b = a2 if coeff == "laminate" else a1
        grid = laminate_grid(n, a1, b, axis=1)
        A, corr = homogenize_scalar(grid)
        closed = np.diag([(a1 + b) / 2, 2 * a1 * b / (a1 + b)])
        obs = {"a_hom": A, "a_hom_closed_form": closed,
               "a_hom_rel_error": float(np.max(np.abs(A - closed)) / np.max(np.abs(closed)))}
        ahom = lambda xc: np.broadcast_to(A, (len(xc), 2, 2))
        cgrad = lambda xc, y: corrector_gradient_at(grid, corr, y)
        return ahom, cgrad, obs, b
    if coeff == "perforation":
        rad = _radius_field(p)
        m = int(p.get("radius_samples", 5))
        lo, hi = float(rad(np.zeros((1, 2)))[0]), float(rad(np.ones((1, 2)))[0])
        rs = np.linspace(min(lo, hi), max(lo, hi), m)
        cells = [disk_cell(n, r, a1, a2) for r in rs]
        sols = [homogenize_scalar(c) for c in cells]
        As = np.stack([s[0] for s in sols])

        def ahom(xc):
            t = rad(xc)
            return np.stack([np.interp(t, rs, As[:, i, j]) for i in range(2) for j in range(2)],
                            axis=-1).reshape(-1, 2, 2)

        def cgrad(xc, y):
            k = np.argmin(np.abs(rad(xc)[:, None] - rs[None]), axis=1)
            out = np.empty((2, len(y), 2))
            for q in np.unique(k):
                sel = k == q
                out[:, sel] = corrector_gradient_at(cells[q], sols[q][1], y[sel])
            return out
        return ahom, cgrad, {"radius_samples": rs, "a_hom_samples": As}, a2
    raise ValueError(f"unknown coefficient {coeff!r}")


def _load(p: dict) -> BoundaryData:
    amp = float(p.get("load", 2 * math.pi ** 2))
    return BoundaryData(lambda x: np.zeros(len(x)), lambda x: amp * np.prod(np.sin(np.pi * x), axis=-1))


def _gradient_errors(ueps: MacroSolution, uhom: MacroSolution, cgrad, cov, eps) -> tuple[float, float]:
    mesh = ueps.mesh
    _, w, _, _ = mesh.reference(2)
    _, ge = ueps.evaluate(2)
    _, gh = uhom.evaluate(2)
    ge, gh = ge[:, :, 0, :], gh[:, :, 0, :]
    macro = gh.mean(axis=1)  # gradient of u_hom at element centroids
    x = mesh.quadrature_points(2).reshape(-1, 2)
    ids = cov.locate(x)
    y = (x - cov.shifts[ids]) / eps
    y -= np.floor(y)
    xc = np.repeat(mesh.centroids, w.size, axis=0)
    dchi = cgrad(xc, y)  # (2, N, 2): grad_y chi_j
    m = np.repeat(macro, w.size, axis=0)
    u1 = np.einsum("nj,jnk->nk", m, dchi).reshape(ge.shape)
    plain = math.sqrt(math.fsum(np.einsum("q,eqk->e", w, (ge - gh) ** 2)))
    corr = math.sqrt(math.fsum(np.einsum("q,eqk->e", w, (ge - gh - u1) ** 2)))
    return plain, corr


def run_homog_error_study(spec: StudySpec, workers: int = 1) -> StudyReport:
    """Direct fine-scale solves against the homogenized solution on the same mesh."""
    spec.validate()
    p = spec.params
    n = int(spec.resolutions.get("fine_n", 512))
    cell_n = int(spec.resolutions.get("cell_n", 128))
    per = int(spec.resolutions.get("per_period", 8))
    r = float(p.get("r", 0.5))
    coeff = p.get("coefficient", "laminate")
    a1 = float(p.get("a1", 1.0))
    dom = DomainBox.unit(2)
    mesh = MacroMesh.uniform(dom, n)
    bc = _load(p)
    ahom, cgrad, obs, a2 = _scalar_cell_data(p, cell_n)
    uhom = solve_macro_scalar(ahom, bc, mesh)
    obs["u_hom_h1"] = uhom.h1_norm()

    def one(eps):
        log.info("direct solve eps=%g", eps)
        if coeff == "perforation":
            cov = perforation_covering(dom, eps, r)
            pspec = IndicatorSpec.perforation(_radius_field(p), dim=2)
            chi = lambda x: perforation_indicator(pspec, eps, x, cov)
        else:
            cov = build_covering(dom, eps, r, transform=TransformationField.identity(2))
            chi = lambda x: periodic_indicator(laminate_cell(2, 1), cov, eps, x)
        ueps = solve_direct_micro_scalar(chi, a1, a2, eps, bc, mesh, per_period=per)
        plain, corr = _gradient_errors(ueps, uhom, cgrad, cov, eps)
        return {"case": coeff, "epsilon": float(eps), "l2_error": ueps.l2_difference(uhom),
                "grad_error_plain": plain, "grad_error_corrected": corr, "h1_norm": ueps.h1_norm(),
                "residual": ueps.residual}

    rows = _map(one, [float(e) for e in spec.schedule], workers)
    rules = {}
    if spec.kind == "homog_error":
        if coeff == "constant":
            rules["l2_error:zero"] = {"kind": "all_le", "case": coeff, "column": "l2_error", "bound": 1e-8}
        else:
            rules["l2_error:decreasing_last3"] = {"kind": "decreasing", "case": coeff, "column": "l2_error",
                                                 "last": 3}
        rules["h1:a_priori_ratio"] = {"kind": "ratio_le", "case": coeff, "column": "h1_norm", "bound": 1.5}
    if coeff != "constant":
        rules["gradient:corrector_improves"] = {"kind": "all_lt_column", "case": coeff,
                                                "column": "grad_error_corrected", "other": "grad_error_plain"}
    orders = {"l2_error": fit_order([r_["epsilon"] for r_ in rows], [r_["l2_error"] for r_ in rows]),
              "grad_error_corrected": fit_order([r_["epsilon"] for r_ in rows],
                                                [r_["grad_error_corrected"] for r_ in rows])}
    if "a_hom_rel_error" in obs:
        obs["a_hom_oracle_within_1pct"] = obs["a_hom_rel_error"] <= 1e-2
    return StudyReport(spec.kind, rows, rules, orders=orders, observations=_plain(obs),
                       provenance=_provenance(spec))


# ---------------------------------------------------------------------------
# lp / np discrepancy


def run_lp_np_trend(spec: StudySpec, workers: int = 1) -> StudyReport:
    """Measure of the set where the non-periodic plywood and its lp approximation differ."""
    spec.validate()
    p = spec.params
    a = float(p.get("a", 0.25))
    samples = int(spec.resolutions.get("samples", 1_000_000))
    r_values = [float(r) for r in p.get("r_values", [0.8])]
    gamma = RotationAngleField.default()
    control = bool(p.get("control", True))
    jobs = [(f"r={r:g}", r, gamma, e) for r in r_values for e in spec.schedule]
    if control:
        jobs += [("control_constant_gamma", r_values[0], RotationAngleField.constant(math.pi / 4), e)
                 for e in spec.schedule]

    def one(job):
        case, r, g, eps = job
        m, se = lp_np_discrepancy(IndicatorSpec.plywood_np(a, g), float(eps), r, samples, seed=spec.seed,
                                  return_error=True)
        return {"case": case, "epsilon": float(eps), "r": r, "discrepancy": m, "std_error": se}

    rows = _map(one, jobs, workers)
    rules, orders, obs = {}, {}, {}
    for r in r_values:
        case = f"r={r:g}"
        rules[f"{case}:decreasing"] = {"kind": "decreasing", "case": case, "column": "discrepancy"}
        rules[f"{case}:positive_slope"] = {"kind": "slope_gt", "case": case, "column": "discrepancy", "bound": 0.0}
        rules[f"{case}:slope_consistent_with_bound"] = {"kind": "slope_ge", "case": case, "column": "discrepancy",
                                                        "bound": 0.5 * (3 * r - 2)}
        eps, v = _column(rows, case, "discrepancy")
        orders[case] = fit_order(eps, v)
        lo, hi = 0.5 * (3 * r - 2), 1.5 * (3 * r - 2)
        obs[f"{case}:bound_rate_3r-2"] = 3 * r - 2
        obs[f"{case}:slope_within_50pct_band"] = bool(lo <= orders[case] <= hi)
    if len(r_values) >= 2:
        lo_r, hi_r = f"r={min(r_values):g}", f"r={max(r_values):g}"
        rules["slope_increases_with_r"] = {"kind": "slope_order", "case": lo_r, "other_case": hi_r,
                                           "column": "discrepancy"}
    if control:
        rules["control:zero"] = {"kind": "all_le_column", "case": "control_constant_gamma",
                                 "column": "discrepancy", "other": "std_error", "factor": 3.0}
    return StudyReport("lp_np_trend", rows, rules, orders=orders, observations=obs, provenance=_provenance(spec))


def run_study(spec: StudySpec, workers: int = 1) -> StudyReport:
    if spec.kind == "lemma_suite":
        return run_lemma_suite(spec, workers)
    if spec.kind in ("homog_error", "corrector_gradient"):
        return run_homog_error_study(spec, workers)
    return run_lp_np_trend(spec, workers)
