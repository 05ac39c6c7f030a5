import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lphom.fields import TransformationField
from lphom.geometry import DomainBox, build_covering, mollified_cutoff
from lphom.lab import worked_example
from lphom.lts import (ConvergenceRecord, QuadratureGrid, SeparableFunction, eval_Leps, eval_Leps0,
                       eval_Leps_grad, eval_Leps_rho, fit_order, lts_pairing, strong_lts_check,
                       verify_gradient_convergence, verify_mean_convergence)


def test_fit_order_exact_power():
    eps = [0.1, 0.05, 0.025]
    assert fit_order(eps, [3 * e ** 1.5 for e in eps]) == pytest.approx(1.5)
    assert math.isnan(fit_order(eps, [0.0, 0.0, 1.0]))


def test_record_rejects_increasing_schedule():
    with pytest.raises(ValueError):
        ConvergenceRecord([0.1, 0.2], [1.0, 1.0], 1.0)


def test_record_csv_and_dict():
    rec = ConvergenceRecord([0.1, 0.05, 0.025], [1.1, 1.05, 1.02], 1.0, "demo")
    assert rec.strictly_decreasing()
    text = rec.to_csv()
    assert text.splitlines()[0].startswith("epsilon,measured")
    assert len(text.splitlines()) == 4
    assert rec.to_dict()["label"] == "demo"


def test_quadrature_polynomial_exact():
    g = QuadratureGrid.for_epsilon(DomainBox.unit(2), 1 / 8, 4)
    assert g.integrate(lambda x: x[:, 0] * x[:, 1]) == pytest.approx(0.25, rel=1e-12)


def test_Leps_periodic_in_lattice_shift():
    psi, D = worked_example()
    eps = 2.0 ** -8
    cov = build_covering(DomainBox.unit(1), eps, 0.5, transform=D)
    n = 5
    xn = cov.anchors[n, 0]
    x = np.array([[cov.corners[n, 0] + 0.3 * cov.side]])
    step = eps * math.exp(xn)
    a = eval_Leps0(psi, D, cov, eps, x)
    b = eval_Leps0(psi, D, cov, eps, x + step)
    assert a == pytest.approx(b, abs=1e-9)


def test_Leps_rejects_mismatched_epsilon():
    psi, D = worked_example()
    cov = build_covering(DomainBox.unit(1), 2.0 ** -8, 0.5, transform=D)
    with pytest.raises(ValueError):
        eval_Leps(psi, D, cov, 2.0 ** -7, np.array([[0.5]]))


def test_Leps_rho_needs_matching_cutoff():
    psi, D = worked_example()
    cov = build_covering(DomainBox.unit(1), 2.0 ** -8, 0.5, transform=D)
    other = build_covering(DomainBox.unit(1), 2.0 ** -8, 0.5)
    with pytest.raises(ValueError):
        eval_Leps_rho(psi, D, cov, mollified_cutoff(other, 0.75), None, np.array([[0.5]]))


def test_worked_example_within_tolerance():
    psi, D = worked_example()
    rec = verify_mean_convergence(psi, D, 2, [2.0 ** -8, 2.0 ** -10], r=0.5)
    assert abs(rec.measured[-1] - 5 / 6) / (5 / 6) < 1e-2
    assert rec.reference == pytest.approx(5 / 6, rel=1e-6)


def test_y_independent_function_is_reproduced():
    f = SeparableFunction(lambda x, y: x[:, 0] ** 2, 1, y_axes=(), name="x2")
    D = TransformationField.exponential_1d()
    cov = build_covering(DomainBox.unit(1), 2.0 ** -8, 0.5, transform=D)
    x = np.linspace(0.01, 0.99, 50)[:, None]
    assert np.allclose(eval_Leps(f, D, cov, None, x), x[:, 0] ** 2)


def test_gradient_reference_exact():
    psi, D = worked_example()
    rec = verify_gradient_convergence(psi, D, 2, [2.0 ** -8, 2.0 ** -10], r=0.5)
    exact = math.pi ** 2 * (1 - math.exp(-2.0))
    assert rec.reference == pytest.approx(exact, rel=1e-6)
    assert abs(rec.measured[-1] - exact) / exact < 1e-2


def test_gradient_chain_rule_1d():
    psi, D = worked_example()
    eps = 2.0 ** -8
    cov = build_covering(DomainBox.unit(1), eps, 0.5, transform=D)
    x = np.array([[0.37]])
    g = eval_Leps_grad(psi, D, cov, eps, x)
    ids = cov.locate(x)
    y = math.exp(-cov.anchors[ids, 0][0]) * (x[0, 0] - cov.shifts[ids, 0][0]) / eps
    assert g[0, 0] == pytest.approx(math.exp(-0.37) * 2 * math.pi * math.cos(2 * math.pi * y))


def test_anchor_insensitivity():
    psi, D = worked_example()
    a = verify_mean_convergence(psi, D, 2, [2.0 ** -8, 2.0 ** -10], anchors="center").measured[-1]
    b = verify_mean_convergence(psi, D, 2, [2.0 ** -8, 2.0 ** -10], anchors="random", seed=7).measured[-1]
    assert abs(a - b) < 1e-2


def test_pairing_with_constant_u():
    psi, D = worked_example()
    eps = 2.0 ** -8
    cov = build_covering(DomainBox.unit(1), eps, 0.5, transform=D)
    g = QuadratureGrid.for_epsilon(DomainBox.unit(1), eps, 8)
    val = lts_pairing(lambda x: np.ones(len(x)), psi, D, cov, eps, g)
    assert val == pytest.approx(0.5, abs=5e-3)
    with pytest.raises(ValueError):
        lts_pairing(np.ones(3), psi, D, cov, eps, g)


def test_strong_check_on_exact_sequence():
    psi, D = worked_example()
    seq = []
    for k in (6, 8, 10):
        eps = 2.0 ** -k
        cov = build_covering(DomainBox.unit(1), eps, 0.5, transform=D)
        seq.append((eps, lambda x, c=cov, e=eps: eval_Leps(psi, D, c, e, x)))
    ok, rec = strong_lts_check(seq, psi, D)
    assert ok
    assert rec.reference == pytest.approx(5 / 6, rel=1e-6)


@given(st.floats(0.0, 1.0), st.integers(-5, 5))
def test_separable_periodicity_property(y, k):
    psi, _ = worked_example()
    x = np.array([[0.3]])
    assert psi(x, np.array([[y + k]]))[0] == pytest.approx(psi(x, np.array([[y]]))[0], abs=1e-9)
