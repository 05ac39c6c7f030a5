import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lphom.cell import (HomogenizedTensorField, assemble_Ahom, bounds_for, build_cell_coefficient,
                        checkerboard_cell, corrector_gradient_at, corrector_gradients, disk_cell,
                        homogenize_elastic, homogenize_scalar, laminate_cell, lobatto_points, reduced_rotation,
                        reduced_strain, sample_Ahom, sample_Bhom, solve_cell_elastic, solve_cell_scalar,
                        stiffness_matrix, structural_report)
from lphom.fields import RotationAngleField, rotation
from lphom.tensors import Tensor4, voigt_reuss_bounds

E1 = Tensor4.from_young(10.0, 0.3)
E2 = Tensor4.from_young(1.0, 0.35)


def test_reduced_rotation_rows():
    g = 0.4
    Rh = reduced_rotation(g)
    assert np.allclose(Rh, [[-math.sin(g), math.cos(g), 0], [0, 0, 1]])


def test_reduced_strain_symmetric(rng):
    S = reduced_strain(rng.normal(size=(3, 2)), 0.7)
    assert np.allclose(S, S.T)


def test_coefficient_validation():
    with pytest.raises(ValueError):
        build_cell_coefficient(0.0, E1, E2, 16)
    with pytest.raises(ValueError):
        build_cell_coefficient(0.5, E1, E2, 16)
    with pytest.raises(ValueError):
        laminate_cell(8, -1.0, 1.0)


def test_stiffness_kernel_is_constants():
    grid = build_cell_coefficient(0.25, E1, E2, 8)
    K = stiffness_matrix(grid, 0.3)
    assert abs(K - K.T).max() < 1e-10 * abs(K).max()
    ones = np.zeros(grid.ndof)
    ones[0::3] = 1.0
    assert np.max(np.abs(K @ ones)) < 1e-10 * abs(K).max()


def test_homogeneous_cell_reproduces_tensor():
    A, corr, _ = homogenize_elastic(0.25, E1, E1, 0.3, n=16)
    assert np.linalg.norm(A.c - E1.c) / np.linalg.norm(E1.c) < 1e-8
    assert np.max(np.abs(corr.fields)) < 1e-8


def test_laminate_scalar_oracle():
    A, _ = homogenize_scalar(laminate_cell(32, 1.0, 4.0, axis=1))
    assert A[0, 0] == pytest.approx(2.5, rel=1e-10)
    assert A[1, 1] == pytest.approx(1.6, rel=1e-8)
    assert abs(A[0, 1]) < 1e-10


@given(st.floats(0.2, 20.0))
def test_laminate_scalar_harmonic_mean_property(a2):
    A, _ = homogenize_scalar(laminate_cell(8, 1.0, a2, axis=0))
    assert A[0, 0] == pytest.approx(2.0 / (1.0 + 1.0 / a2), rel=1e-8)
    assert A[1, 1] == pytest.approx(0.5 * (1.0 + a2), rel=1e-10)


def test_checkerboard_duality_coarse():
    A, _ = homogenize_scalar(checkerboard_cell(64, 1.0, 4.0))
    assert A[0, 0] == pytest.approx(2.0, rel=2e-2)
    assert A[0, 0] == pytest.approx(A[1, 1], rel=1e-10)


def test_disk_cell_between_bounds():
    grid = disk_cell(32, 0.3, 10.0, 1.0)
    A, corr = homogenize_scalar(grid)
    lo, hi = voigt_reuss_bounds(0.3, 10.0, 1.0, theta=grid.volume_fraction)
    ev = np.linalg.eigvalsh(A)
    assert lo <= ev.min() and ev.max() <= hi
    g = corrector_gradients(grid, corr)
    assert g.shape == (2, 32 * 32, 2)
    # point evaluation at element centroids agrees with the centroid gradients
    from lphom.cell import element_centroids
    gp = corrector_gradient_at(grid, corr, element_centroids(32))
    assert np.allclose(gp, g, atol=1e-10)


def test_scalar_solver_rejects_elastic_grid():
    with pytest.raises(ValueError):
        solve_cell_scalar(build_cell_coefficient(0.25, E1, E2, 8))


def test_structural_checks_fibre_cell():
    A, corr, grid = homogenize_elastic(0.25, E1, E2, 0.0, n=24)
    reuss, voigt = bounds_for(grid, E1, E2)
    rep = structural_report(A, reuss, voigt)
    assert rep["symmetric"] and rep["positive_definite"] and rep["reuss_le"] and rep["le_voigt"]
    assert max(corr.residuals) <= 1e-10


def test_rotation_covariance_small_grid():
    A0, _, _ = homogenize_elastic(0.25, E1, E2, 0.0, n=16)
    g = math.pi / 6
    Ag, _, _ = homogenize_elastic(0.25, E1, E2, g, n=16)
    Arot = A0.rotate(rotation(g).T)
    assert np.linalg.norm(Ag.c - Arot.c) / np.linalg.norm(Ag.c) < 1e-8


def test_zero_shear_sheared_solver_matches():
    A, _, _ = homogenize_elastic(0.25, E1, E2, 0.2, n=16)
    B, _, _ = homogenize_elastic(0.25, E1, E2, 0.2, n=16, shear=1e-14)
    assert np.linalg.norm(A.c - B.c) / np.linalg.norm(A.c) < 1e-8


def test_sheared_cell_is_valid():
    A, corr, grid = homogenize_elastic(0.25, E1, E2, 0.3, n=16, shear=0.4)
    reuss, voigt = bounds_for(grid, E1, E2)
    rep = structural_report(A, reuss, voigt)
    assert rep["symmetric"] and rep["positive_definite"]
    assert grid.gauss_weights.sum() == pytest.approx(1.0)


def test_lobatto_points():
    p = lobatto_points(0.0, 1.0, 5)
    assert p[0] == 0.0 and p[-1] == 1.0 and np.all(np.diff(p) > 0)
    assert lobatto_points(0.0, 2.0, 1)[0] == 1.0


def test_tensor_field_sampling_and_roundtrip(tmp_path):
    f = sample_Ahom(0.25, E1, E2, RotationAngleField.default(), (0.0, 1.0), samples=3, n=8)
    assert len(f.samples) == 3
    mid = f(np.array([[0.5, 0.5, f.coords[0][1]]]))
    assert np.allclose(mid[0], f.tensors[1])
    f.to_json(tmp_path / "t.json")
    g = HomogenizedTensorField.from_json(tmp_path / "t.json")
    assert np.allclose(g.tensors, f.tensors)
    assert f.covers(0.0, 1.0) and not f.covers(-0.5, 1.0)
    assert f.to_csv().count("\n") >= 3
    json.loads((tmp_path / "t.json").read_text())


def test_sample_Bhom_grid():
    coords = [np.array([0.0, 1.0])] * 3
    f = sample_Bhom(0.25, E1, E2, RotationAngleField.default(), coords, n=8)
    assert f.tensors.shape == (2, 2, 2, 3, 3, 3, 3)
    for q, T in enumerate(f.samples):
        reuss, voigt = voigt_reuss_bounds(0.25, E1, E2, theta=f.fractions[q])
        rep = structural_report(T, reuss, voigt)
        assert rep["symmetric"] and rep["positive_definite"]


def test_assemble_rejects_asymmetric():
    grid = build_cell_coefficient(0.25, E1, E2, 8)
    corr = solve_cell_elastic(grid, 0.0)
    corr.fields[1] += 1e-3 * np.sin(np.arange(corr.fields.shape[1]))[:, None]
    with pytest.raises(ValueError, match="major symmetry"):
        assemble_Ahom(grid, 0.0, corr, tol=1e-12)


@pytest.mark.slow
def test_mesh_convergence_against_finer_reference():
    # successive differences plateau where two grids share a pixel fraction
    # (16^2 and 32^2 both give 0.203125), so errors are taken against 128^2
    A = {n: homogenize_elastic(0.25, E1, E2, 0.3, n=n)[0].c for n in (16, 32, 64, 128)}
    err = [np.linalg.norm(A[n] - A[128]) / np.linalg.norm(A[128]) for n in (16, 32, 64)]
    assert all(b < a for a, b in zip(err, err[1:]))
    assert err[-1] < 1e-2
