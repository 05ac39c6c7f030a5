#!/usr/bin/env python3
"""Fine-scale vs homogenized solutions for the 2D scalar analog.

Prints L2 errors, plain and corrector-enhanced gradient errors and H1 norms
per epsilon for a laminate, constant or perforated coefficient.
"""
import argparse
import os

from lphom.lab import StudySpec, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--coefficient", choices=["laminate", "constant", "perforation"], default="laminate")
    ap.add_argument("--fine-n", type=int, default=512)
    ap.add_argument("--cell-n", type=int, default=128)
    ap.add_argument("--schedule", type=float, nargs="+", default=[1 / 8, 1 / 16, 1 / 32])
    ap.add_argument("--out", default="results/homog_error")
    args = ap.parse_args()
    spec = StudySpec("homog_error", args.schedule, {"coefficient": args.coefficient},
                     {"fine_n": args.fine_n, "cell_n": args.cell_n})
    rep = run_study(spec)
    os.makedirs(args.out, exist_ok=True)
    rep.to_json(os.path.join(args.out, f"homog_error_{args.coefficient}.json"))
    rep.to_csv(os.path.join(args.out, f"homog_error_{args.coefficient}.csv"))
    print(f"{'eps':>8} {'l2':>11} {'grad':>9} {'grad+corr':>10} {'H1':>8}")
    for r in rep.rows:
        print(f"{r['epsilon']:8.5f} {r['l2_error']:11.4e} {r['grad_error_plain']:9.4f} "
              f"{r['grad_error_corrected']:10.4f} {r['h1_norm']:8.4f}")
    for line in rep.summary_lines():
        print(line)


if __name__ == "__main__":
    main()
