import numpy as np
import pytest
from hypothesis import given, strategies as st

from lphom.fields import rotation
from lphom.tensors import (Tensor4, mandel_to_sym, probe_basis, quadratic_le, sym_to_mandel,
                           voigt_reuss_bounds)


def test_mandel_roundtrip(rng):
    S = rng.normal(size=(3, 3))
    S = S + S.T
    assert np.allclose(mandel_to_sym(sym_to_mandel(S)), S)
    # Mandel form preserves the Frobenius inner product
    assert np.dot(sym_to_mandel(S), sym_to_mandel(S)) == pytest.approx(np.sum(S * S))


def test_isotropic_voigt_entries():
    V = Tensor4.isotropic(2.0, 3.0).to_voigt()
    assert V[0, 0] == pytest.approx(8.0)
    assert V[0, 1] == pytest.approx(2.0)
    assert V[3, 3] == pytest.approx(3.0)


def test_voigt_roundtrip(rng):
    A = rng.normal(size=(6, 6))
    V = A @ A.T + 6 * np.eye(6)
    T = Tensor4.from_voigt(V)
    assert np.allclose(T.to_voigt(), V)
    assert max(T.symmetry_defects().values()) < 1e-14


def test_validate_rejects_nonsymmetric():
    V = np.eye(6)
    V[0, 1] = 0.5
    with pytest.raises(ValueError, match="symmetr"):
        Tensor4.from_voigt(V).validate()


@given(st.floats(0, 2 * np.pi))
def test_isotropic_rotation_invariant(alpha):
    T = Tensor4.from_young(10.0, 0.3)
    assert np.allclose(T.rotate(rotation(alpha)).c, T.c, atol=1e-12)


def test_probe_basis_and_positivity():
    P = probe_basis()
    assert P.shape == (21, 3, 3)
    assert np.allclose(P, np.swapaxes(P, 1, 2))
    T = Tensor4.from_young(1.0, 0.25)
    assert T.min_probe_rayleigh() > 0
    assert T.min_eigenvalue() > 0


def test_bounds_order():
    E1, E2 = Tensor4.from_young(10.0, 0.3), Tensor4.from_young(1.0, 0.35)
    reuss, voigt = voigt_reuss_bounds(0.25, E1, E2)
    assert quadratic_le(reuss, voigt)
    assert not quadratic_le(voigt, reuss)
    lo, hi = voigt_reuss_bounds(0.25, 1.0, 4.0, theta=0.5)
    assert lo == pytest.approx(1.6) and hi == pytest.approx(2.5)


def test_bounds_reject_bad_fraction():
    with pytest.raises(ValueError):
        voigt_reuss_bounds(0.25, 1.0, 2.0, theta=1.5)
