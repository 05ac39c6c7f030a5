#!/usr/bin/env python3
"""Cell-grid convergence of A_hom for the fibre cell, with pixel volume fractions."""
import argparse

import numpy as np

from lphom.cell import homogenize_elastic
from lphom.tensors import Tensor4


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grids", type=int, nargs="+", default=[16, 32, 64, 128])
    ap.add_argument("--a", type=float, default=0.25)
    ap.add_argument("--gamma", type=float, default=0.3)
    args = ap.parse_args()
    E1, E2 = Tensor4.from_young(10.0, 0.3), Tensor4.from_young(1.0, 0.35)
    A, frac = {}, {}
    for n in args.grids:
        T, corr, grid = homogenize_elastic(args.a, E1, E2, args.gamma, n=n)
        A[n], frac[n] = T.c, grid.volume_fraction
        print(f"n={n:4d} fraction={frac[n]:.6f} max residual={max(corr.residuals):.1e}")
    ref = args.grids[-1]
    scale = np.linalg.norm(A[ref])
    for n0, n1 in zip(args.grids, args.grids[1:]):
        print(f"|A({n0}) - A({n1})| / |A| = {np.linalg.norm(A[n0] - A[n1]) / scale:.3e}")
    for n in args.grids[:-1]:
        print(f"|A({n}) - A({ref})| / |A| = {np.linalg.norm(A[n] - A[ref]) / scale:.3e}")


if __name__ == "__main__":
    main()
