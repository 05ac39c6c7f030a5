import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lphom.fields import RotationAngleField, TransformationField, rotation, shear, shear_value


def test_rotation_identity_and_action():
    assert np.allclose(rotation(0.0), np.eye(3))
    assert np.allclose(rotation(math.pi / 2) @ [1, 0, 0], [0, -1, 0], atol=1e-15)


@pytest.mark.parametrize("alpha", [0.3, 1.1, 2.9])
def test_rotation_determinant(alpha):
    assert np.linalg.det(rotation(alpha)) == pytest.approx(1.0, abs=1e-14)


def test_rotation_orthogonal_many(rng):
    R = rotation(rng.uniform(-10, 10, 100))
    err = np.einsum("nji,njk->nik", R, R) - np.eye(3)
    assert np.max(np.abs(err)) < 1e-12


def test_shear_constant_gamma_is_identity():
    g = RotationAngleField.constant(0.7)
    x = np.array([[0.3, 0.8, 0.1]])
    assert shear_value(x, g)[0] == 0.0
    assert np.allclose(shear(x, g), np.eye(3))


def test_shear_linear_gamma_value():
    g = RotationAngleField.linear(1.0, 0.0)
    assert shear_value(np.array([[1.0, 0.0, 0.0]]), g)[0] == pytest.approx(1.0)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_shear_unit_determinant(x):
    W = shear(np.array([x]), RotationAngleField.default())
    W = W.reshape(-1, 3, 3)[0]
    assert W[1, 2] == pytest.approx(shear_value(np.array([x]), RotationAngleField.default())[0])
    assert np.linalg.det(W) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.tril(W, -1), 0.0)


def test_default_gamma_range_and_derivatives():
    g = RotationAngleField.default()
    t = np.linspace(-2, 2, 401)
    v = g(t)
    assert np.all((v >= 0) & (v <= math.pi))
    assert g.check(0.0, 1.0) < 1e-5
    assert not g.is_constant


def test_transformation_sheared_plywood_unit_det(rng):
    D = TransformationField.plywood_sheared(RotationAngleField.default())
    x = rng.random((200, 3))
    assert np.max(np.abs(np.abs(D.det(x)) - 1.0)) < 1e-12
    assert D.check(x) < 1e-12


def test_exponential_field():
    D = TransformationField.exponential_1d(0.0, 1.0)
    x = np.array([[0.0], [0.5], [1.0]])
    assert np.allclose(D.det(x), np.exp(x[:, 0]))
    assert D.lipschitz_estimate(np.linspace(0, 1, 11)[:, None]) == pytest.approx(math.e, rel=1e-3)


def test_singular_constant_field_rejected():
    with pytest.raises(ValueError):
        TransformationField.constant(np.zeros((2, 2)))
