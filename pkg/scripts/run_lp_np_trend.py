#!/usr/bin/env python3
"""Symmetric-difference measure between the non-periodic plywood and its
locally-periodic approximation, for several r, with fitted log-log slopes."""
import argparse
import os

from lphom.lab import StudySpec, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r", type=float, nargs="+", default=[0.75, 0.8, 0.9])
    ap.add_argument("--schedule", type=float, nargs="+", default=[1 / 16, 1 / 32, 1 / 64])
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/lp_np_trend")
    args = ap.parse_args()
    spec = StudySpec("lp_np_trend", args.schedule, {"r_values": args.r}, {"samples": args.samples}, args.seed)
    rep = run_study(spec)
    os.makedirs(args.out, exist_ok=True)
    rep.to_json(os.path.join(args.out, "lp_np_trend.json"))
    rep.write_plot_data(os.path.join(args.out, "plot_data"))
    for case, slope in rep.orders.items():
        r = float(case.split("=")[1])
        print(f"{case}: fitted slope {slope:.3f} (3r-2 = {3 * r - 2:.3f}, 2r-1 = {2 * r - 1:.3f})")
    for line in rep.summary_lines():
        print(line)


if __name__ == "__main__":
    main()
