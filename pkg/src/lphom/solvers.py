"""Sparse linear solvers shared by the cell and macroscopic problems."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def constant_modes(ndof: int, ncomp: int) -> np.ndarray:
    """Orthonormal per-component constant vectors for interleaved unknowns."""
    nn = ndof // ncomp
    Z = np.zeros((ndof, ncomp))
    for c in range(ncomp):
        Z[c::ncomp, c] = 1.0 / np.sqrt(nn)
    return Z


def deflated_pcg(A: sp.spmatrix, b: np.ndarray, Z: np.ndarray | None = None, rtol: float = 1e-10,
                 maxiter: int = 10000) -> tuple[np.ndarray, SolveInfo]:
    """Jacobi-preconditioned CG with the columns of ``Z`` projected out.

    ``A`` must be symmetric positive semidefinite with kernel spanned by the
    orthonormal columns of ``Z``; the returned solution is orthogonal to them.
    """
    def proj(v):
        return v if Z is None else v - Z @ (Z.T @ v)

    b = proj(np.asarray(b, dtype=float))
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, SolveInfo(0, 0.0)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("assembled operator has a non-positive diagonal entry (indefinite system)")
    minv = 1.0 / diag
    r = b.copy()
    z = proj(minv * r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise SolverError(f"indefinite operator detected (p.Ap = {pAp:.3e}) at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        z = proj(minv * r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        res = float(np.linalg.norm(A @ x - b)) / bnorm
        raise SolverError(f"CG did not converge in {maxiter} iterations (residual {res:.3e})")
    x = proj(x)
    res = float(np.linalg.norm(A @ x - b)) / bnorm
    if res > 10 * rtol:
        # recursive residual drifted; polish with a few more steps from x
        dx, info = deflated_pcg(A, b - A @ x, Z, rtol=rtol * bnorm / max(res * bnorm, 1e-300), maxiter=maxiter)
        x = proj(x + dx)
        res = float(np.linalg.norm(A @ x - b)) / bnorm
        it += info.iterations
    return x, SolveInfo(it, res)


def spd_solve(A: sp.spmatrix, b: np.ndarray, rtol: float = 1e-10,
              near_null: np.ndarray | None = None) -> tuple[np.ndarray, SolveInfo]:
    """Solve a symmetric positive definite system; direct below 60k unknowns, else AMG-CG.

    ``near_null`` (columns) seeds the aggregation, e.g. rigid body modes for elasticity.
    """
    n = A.shape[0]
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo(0, 0.0)
    if n <= 60_000:
        x = spla.spsolve(A.tocsc(), b)
        res = float(np.linalg.norm(A @ x - b)) / bnorm
        return x, SolveInfo(1, res)
    import pyamg

    # pyamg draws its spectral-radius start vectors from the global RNG
    state = np.random.get_state()
    np.random.seed(0)
    try:
        ml = pyamg.smoothed_aggregation_solver(A.tocsr(), B=near_null, symmetry="symmetric")
    finally:
        np.random.set_state(state)
    residuals: list = []
    x = ml.solve(b, tol=rtol, accel="cg", maxiter=500, residuals=residuals)
    res = float(np.linalg.norm(A @ x - b)) / bnorm
    if res > rtol * 10:
        raise SolverError(f"AMG-CG stalled at relative residual {res:.3e}")
    return x, SolveInfo(len(residuals), res)
