"""Command-line entry point: ``lphom <command> --config cfg.json --out DIR``.

Exit status is 0 iff every acceptance flag of the produced reports passes,
1 when a flag fails or a computation raises, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from .cell import HomogenizedTensorField, lobatto_points, sample_Ahom, sample_Bhom, structural_report
from .geometry import build_covering
from .lab import StudyReport, StudySpec, run_study
from .macro import BoundaryData, MacroMesh, manufactured_elastic, solve_macro_elastic
from .microstructure import IndicatorSpec, export_voxels, perforation_covering, plywood_covering, voxelize
from .tensors import voigt_reuss_bounds

log = logging.getLogger("lphom")

COMMANDS = ("covering", "microstructure", "lts-verify", "homogenize", "macro", "converge")


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _flags_file(out, name, flags: dict, extra: dict | None = None) -> None:
    _write_json(os.path.join(out, f"{name}_flags.json"), {"flags": flags, "passed": all(flags.values()),
                                                          **(extra or {})})


# ---------------------------------------------------------------------------
# plans


def _plan(cmd: str, cfg: cfgmod.Config, args) -> dict:
    plan = {"command": cmd, "config": cfg.source, "out": args.out, "seed": cfg.seed, "threads": args.threads}
    if cmd == "covering":
        plan.update(epsilon=cfg.get("epsilon", default=0.25), r=cfg.get("r", default=0.5), outputs=["covering.json"])
    elif cmd == "microstructure":
        plan.update(variant=cfg.get("microstructure", "variant", default="plywood_lp"),
                    voxels=cfg.get("grid", "voxels"), outputs=["voxels.raw", "voxels.json"])
    elif cmd == "lts-verify":
        plan.update(schedule=_schedule(cfg, [2.0 ** -k for k in range(6, 11)]),
                    outputs=["lemma_suite.json", "lemma_suite.csv"])
    elif cmd == "homogenize":
        plan.update(tensor=cfg.get("homogenize", "tensor", default="A_hom"),
                    cell_n=cfg.get("grid", "cell_n", default=64), samples=cfg.get("grid", "samples", default=9),
                    outputs=["tensors.json", "tensors.csv", "homogenize_flags.json"])
    elif cmd == "macro":
        plan.update(tensor_file=cfg.get("macro", "tensor_file"), macro_n=cfg.get("grid", "macro_n", default=8),
                    boundary=cfg.get("macro", "boundary", default="zero"),
                    outputs=["solution.json", "solution.bin", "macro_flags.json"])
    elif cmd == "converge":
        kind = cfg.get("study", "kind", default="homog_error")
        plan.update(study=kind, schedule=_schedule(cfg, [1 / 8, 1 / 16, 1 / 32]),
                    outputs=[f"{kind}.json", f"{kind}.csv"])
    return plan


def _schedule(cfg, default):
    return [float(e) for e in cfg.get("schedule", default=default)]


# ---------------------------------------------------------------------------
# commands


def cmd_covering(cfg: cfgmod.Config, args) -> bool:
    dom = cfg.domain()
    cov = build_covering(dom, float(cfg.get("epsilon", default=0.25)), float(cfg.get("r", default=0.5)),
                         anchors=cfg.get("covering", "anchors", default="center"), transform=cfg.transform(),
                         shifts=cfg.get("covering", "shifts", default="auto"), seed=cfg.seed)
    cov.to_json(os.path.join(args.out, "covering.json"), sort_keys=True)
    log.info("covering with %d cubes written", cov.N_eps)
    return True


def _indicator_spec(cfg) -> IndicatorSpec:
    ms = cfg.get("microstructure", default={"variant": "plywood_lp"})
    v = ms["variant"]
    if v == "plywood_lp":
        return IndicatorSpec.plywood_lp(ms.get("a", 0.25), cfg.gamma(), float(cfg.get("r", default=0.5)))
    if v == "plywood_np":
        return IndicatorSpec.plywood_np(ms.get("a", 0.25), cfg.gamma())
    return IndicatorSpec.perforation(cfgmod.radius_field(ms), dim=cfg.domain().dim)


def cmd_microstructure(cfg, args) -> bool:
    spec = _indicator_spec(cfg)
    dom = cfg.domain()
    eps = float(cfg.get("epsilon", default=0.125))
    shape = cfg.get("grid", "voxels", default=[64] * dom.dim)
    if len(shape) != dom.dim:
        raise cfgmod.ConfigError("$.grid.voxels: one entry per domain axis required")
    cov = None
    if spec.variant == "plywood_lp":
        cov = plywood_covering(dom, spec, eps, cfg.get("covering", "anchors", default="center"), cfg.seed)
    elif spec.variant == "perforation":
        cov = perforation_covering(dom, eps, float(cfg.get("r", default=0.5)),
                                   cfg.get("covering", "anchors", default="center"), cfg.seed)
    vox = voxelize(spec, eps, dom, shape, cov)
    export_voxels(os.path.join(args.out, "voxels"), vox, dom, eps, spec)
    return True


def cmd_lts_verify(cfg, args) -> bool:
    st = cfg.get("study", default={})
    params = dict(st.get("params", {}))
    params.setdefault("r", float(cfg.get("r", default=0.5)))
    if cfg.get("rho") is not None:
        params.setdefault("rho", float(cfg.get("rho")))
    spec = StudySpec("lemma_suite", _schedule(cfg, [2.0 ** -k for k in range(6, 11)]), params,
                     dict(st.get("resolutions", {})), cfg.seed)
    return _emit(run_study(spec, args.threads), args)


def cmd_converge(cfg, args) -> bool:
    st = cfg.get("study", default={"kind": "homog_error"})
    kind = st["kind"]
    params = dict(st.get("params", {}))
    res = dict(st.get("resolutions", {}))
    for key in ("fine_n", "cell_n", "per_period"):
        if cfg.get("grid", key) is not None:
            res.setdefault(key, cfg.get("grid", key))
    if cfg.get("grid", "samples_mc") is not None:
        res.setdefault("samples", cfg.get("grid", "samples_mc"))
    if kind == "lp_np_trend" and cfg.get("microstructure", "a") is not None:
        params.setdefault("a", cfg.get("microstructure", "a"))
    default = [1 / 16, 1 / 32, 1 / 64] if kind == "lp_np_trend" else [1 / 8, 1 / 16, 1 / 32]
    spec = StudySpec(kind, _schedule(cfg, default), params, res, cfg.seed)
    return _emit(run_study(spec, args.threads), args)


def _emit(report: StudyReport, args) -> bool:
    report.to_json(os.path.join(args.out, f"{report.kind}.json"))
    report.to_csv(os.path.join(args.out, f"{report.kind}.csv"))
    if args.emit_plot_data:
        report.write_plot_data(os.path.join(args.out, "plot_data"))
    for line in report.summary_lines():
        print(line)
    return report.passed


def cmd_homogenize(cfg, args) -> bool:
    E1, E2 = cfg.moduli()
    a = float(cfg.get("microstructure", "a", default=0.25))
    if not 0 < a < 0.5:
        raise cfgmod.ConfigError("$.microstructure.a: cell problems need 0 < a < 1/2")
    gamma = cfg.gamma()
    n = int(cfg.get("grid", "cell_n", default=64))
    m = int(cfg.get("grid", "samples", default=9))
    dom = cfg.domain(default_dim=3)
    if dom.dim != 3:
        raise cfgmod.ConfigError("$.domain: plywood homogenization needs a 3D domain")
    kind = cfg.get("homogenize", "tensor", default="A_hom")
    if kind == "A_hom":
        lo, hi = cfg.get("homogenize", "x3_range", default=[dom.lo[2], dom.hi[2]])
        field = sample_Ahom(a, E1, E2, gamma, (lo, hi), m, n, args.threads)
    else:
        coords = [lobatto_points(dom.lo[i], dom.hi[i], m) for i in range(3)]
        field = sample_Bhom(a, E1, E2, gamma, coords, n, args.threads)
    field.to_json(os.path.join(args.out, "tensors.json"))
    field.to_csv(os.path.join(args.out, "tensors.csv"))
    flags, reports = {}, []
    for q, T in enumerate(field.samples):
        reuss, voigt = voigt_reuss_bounds(a, E1, E2, theta=field.fractions[q])
        rep = structural_report(T, reuss, voigt)
        reports.append(rep)
        flags[f"sample{q}:symmetric"] = rep["symmetric"]
        flags[f"sample{q}:positive_definite"] = rep["positive_definite"]
        flags[f"sample{q}:reuss_le_A"] = rep["reuss_le"]
        flags[f"sample{q}:A_le_voigt"] = rep["le_voigt"]
    _flags_file(args.out, "homogenize", flags, {"samples": reports})
    ok = all(flags.values())
    print(f"{'PASS' if ok else 'FAIL'} homogenize: {len(reports)} samples structurally valid")
    return ok


def cmd_macro(cfg, args) -> bool:
    dom = cfg.domain(default_dim=3)
    if dom.dim != 3:
        raise cfgmod.ConfigError("$.domain: macroscopic elasticity needs a 3D domain")
    path = cfg.get("macro", "tensor_file")
    if path is not None:
        field = HomogenizedTensorField.from_json(path)
    else:
        field = HomogenizedTensorField.constant(cfg.moduli()[0], label="E1")
    mesh = MacroMesh.uniform(dom, int(cfg.get("grid", "macro_n", default=8)))
    kind = cfg.get("macro", "boundary", default="zero")
    flags, extra = {}, {}
    if kind == "manufactured":
        T = field.samples[0]
        if len(field.samples) != 1 or not T.is_isotropic(1e-10):
            raise cfgmod.ConfigError("$.macro.boundary: manufactured data need a constant isotropic tensor")
        V = T.to_voigt()
        u, G = manufactured_elastic(V[0, 1], V[3, 3])
        bc = BoundaryData(u, G)
    elif kind == "linear":
        M = np.asarray(cfg.get("macro", "gradient", default=np.eye(3).tolist()), dtype=float)
        if M.shape != (3, 3):
            raise cfgmod.ConfigError("$.macro.gradient: 3x3 matrix required")
        bc = BoundaryData(lambda x: x @ M.T)
    else:
        load = np.asarray(cfg.get("macro", "load", default=[0.0, 0.0, -1.0]), dtype=float)
        bc = BoundaryData(lambda x: np.zeros((len(x), 3)), lambda x: np.broadcast_to(load, (len(x), 3)))
    sol = solve_macro_elastic(field, bc, mesh)
    sol.export(os.path.join(args.out, "solution"))
    for axis in range(3):
        with open(os.path.join(args.out, f"line_x{axis + 1}.csv"), "w") as fh:
            fh.write(sol.line_samples(axis))
    flags["residual"] = sol.residual <= 1e-9
    if kind == "manufactured":
        extra["l2_error"] = sol.l2_error(u)
    if kind == "linear" and len(field.samples) == 1:
        extra["patch_error"] = float(np.max(np.abs(sol.u - bc.g(mesh.nodes))))
        flags["patch_test"] = extra["patch_error"] <= 1e-10
    _flags_file(args.out, "macro", flags, {"residual": sol.residual, "energy": sol.energy, **extra})
    ok = all(flags.values())
    print(f"{'PASS' if ok else 'FAIL'} macro: residual {sol.residual:.3e}")
    return ok


HANDLERS = {"covering": cmd_covering, "microstructure": cmd_microstructure, "lts-verify": cmd_lts_verify,
            "homogenize": cmd_homogenize, "macro": cmd_macro, "converge": cmd_converge}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", default=None, help="output directory (default: config 'output' or ./lphom_out)")
    common.add_argument("--threads", type=int, default=1, help="worker cap for data-parallel loops")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    common.add_argument("--emit-plot-data", action="store_true", help="write per-case CSVs for log-log plots")
    p = argparse.ArgumentParser(prog="lphom", description="Locally-periodic homogenization toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def _setup_logging() -> None:
    level = os.environ.get("LPHOM_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(level=getattr(logging, level.upper()), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = cfgmod.load(args.config)
    except (OSError, cfgmod.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.overrides["seed"] = args.seed
    args.out = args.out or cfg.get("output", default="lphom_out")
    if args.dry_run:
        print(json.dumps(_plan(args.command, cfg, args), indent=1, sort_keys=True))
        return 0
    os.makedirs(args.out, exist_ok=True)
    try:
        ok = HANDLERS[args.command](cfg, args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
