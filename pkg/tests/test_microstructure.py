import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lphom.fields import RotationAngleField, rotation
from lphom.geometry import DomainBox
from lphom.microstructure import (IndicatorSpec, cylinder_shift_measure, export_voxels, fiber_shift_bound,
                                  fiber_shift_measure, laminate_cell, lp_np_discrepancy, perforation_covering,
                                  perforation_indicator, periodic_indicator, plywood_covering,
                                  plywood_indicator_lp, plywood_indicator_np, read_voxels, voxelize)
from lphom.geometry import build_covering
from lphom.fields import TransformationField


def test_spec_validation():
    with pytest.raises(ValueError):
        IndicatorSpec.plywood_lp(a=0.6)
    with pytest.raises(ValueError):
        IndicatorSpec("plywood_lp", dim=2)
    with pytest.raises(ValueError):
        IndicatorSpec("unknown")
    with pytest.raises(ValueError):
        IndicatorSpec("perforation")


def test_plywood_lp_zero_radius_empty(rng):
    spec = IndicatorSpec.plywood_lp(a=0.0)
    dom = DomainBox.unit(3)
    cov = plywood_covering(dom, spec, 1 / 16)
    x = dom.sample(20_000, rng)
    assert plywood_indicator_lp(spec, cov, 1 / 16, x).sum() == 0


def test_plywood_lp_constant_gamma_is_periodic(rng):
    spec = IndicatorSpec.plywood_lp(0.25, RotationAngleField.constant(0.0), r=0.5)
    dom = DomainBox.unit(3)
    eps = 1 / 16
    cov = plywood_covering(dom, spec, eps)
    x = dom.sample(20_000, rng)
    y = x / eps - np.floor(x / eps)
    periodic = ((y[:, 1] - 0.5) ** 2 + (y[:, 2] - 0.5) ** 2 <= 0.0625).astype(np.uint8)
    assert np.mean(plywood_indicator_lp(spec, cov, eps, x) != periodic) < 1e-3


def test_plywood_lp_volume_fraction(rng):
    spec = IndicatorSpec.plywood_lp(0.25)
    dom = DomainBox.unit(3)
    eps = 1 / 64
    cov = plywood_covering(dom, spec, eps)
    x = dom.sample(400_000, rng)
    frac = plywood_indicator_lp(spec, cov, eps, x).mean()
    assert frac == pytest.approx(math.pi / 16, abs=4e-3)


def test_plywood_lp_anchor_insensitive(rng):
    spec = IndicatorSpec.plywood_lp(0.25)
    dom = DomainBox.unit(3)
    eps = 1 / 32
    x = dom.sample(200_000, rng)
    a = plywood_indicator_lp(spec, plywood_covering(dom, spec, eps), eps, x).mean()
    b = plywood_indicator_lp(spec, plywood_covering(dom, spec, eps, anchors="random", seed=4), eps, x).mean()
    se = math.sqrt(a * (1 - a) / len(x))
    assert abs(a - b) < 5 * se + 5e-3


def test_plywood_lp_in_layer_periodicity(rng):
    spec = IndicatorSpec.plywood_lp(0.25)
    dom = DomainBox.unit(3)
    eps = 1 / 64
    cov = plywood_covering(dom, spec, eps)
    n = cov.N_eps // 2
    c = cov.corners[n]
    x = c + (0.1 + 0.3 * rng.random((500, 3))) * cov.side
    step = eps * rotation(spec.gamma(cov.anchors[n, 2])).T @ np.array([0.0, 1.0, 0.0])
    same = plywood_indicator_lp(spec, cov, eps, x) == plywood_indicator_lp(spec, cov, eps, x + step)
    assert same.mean() > 0.999


def test_plywood_lp_outside_domain_rejected():
    spec = IndicatorSpec.plywood_lp()
    dom = DomainBox.unit(3)
    cov = plywood_covering(dom, spec, 1 / 16)
    with pytest.raises(ValueError):
        plywood_indicator_lp(spec, cov, 1 / 16, np.array([[1.5, 0.5, 0.5]]))


def test_plywood_np_axis_points():
    spec = IndicatorSpec.plywood_np(0.1)
    eps = 1 / 32
    k = np.array([[3.0, 7.0, 11.0], [10.0, 2.0, 20.0]])
    R = rotation(spec.gamma(eps * k[:, 2]))
    x = eps * np.einsum("nji,nj->ni", R, k)
    assert np.all(plywood_indicator_np(spec, eps, x) == 1)


def test_plywood_np_volume_fraction(rng):
    spec = IndicatorSpec.plywood_np(0.25)
    x = DomainBox.unit(3).sample(400_000, rng)
    assert plywood_indicator_np(spec, 1 / 64, x).mean() == pytest.approx(math.pi / 16, abs=4e-3)


def test_perforation_constant_radius_fraction(rng):
    for dim, area in ((2, math.pi * 0.09), (3, 4 / 3 * math.pi * 0.027)):
        spec = IndicatorSpec.perforation(0.3, dim=dim)
        dom = DomainBox.unit(dim)
        eps = 1 / 32
        cov = perforation_covering(dom, eps, 0.5)
        x = dom.sample(200_000, rng)
        assert perforation_indicator(spec, eps, x, cov).mean() == pytest.approx(area, abs=5e-3)


def test_perforation_cell_centre_inside():
    spec = IndicatorSpec.perforation(0.05, dim=2)
    dom = DomainBox.unit(2)
    eps = 1 / 32
    cov = perforation_covering(dom, eps, 0.5)
    n = cov.N_eps // 3
    centre = cov.shifts[n] + eps * 0.5 + eps * 2
    assert perforation_indicator(spec, eps, centre[None], cov)[0] == 1


def test_perforation_rejects_bad_radius():
    spec = IndicatorSpec.perforation(1.2, dim=2)
    dom = DomainBox.unit(2)
    cov = perforation_covering(dom, 1 / 32, 0.5)
    with pytest.raises(ValueError):
        perforation_indicator(spec, 1 / 32, np.array([[0.5, 0.5]]), cov)


def test_laminate_indicator_fraction(rng):
    dom = DomainBox.unit(2)
    cov = build_covering(dom, 1 / 16, 0.5, transform=TransformationField.identity(2))
    x = dom.sample(100_000, rng)
    v = periodic_indicator(laminate_cell(2, 1), cov, 1 / 16, x)
    assert v.dtype == np.uint8
    assert v.mean() == pytest.approx(0.5, abs=5e-3)


def test_cylinder_shift_exact_cases():
    assert cylinder_shift_measure(0.1, 1.0, [0, 0, 0]) == 0.0
    vol = math.pi * 0.01
    assert cylinder_shift_measure(0.1, 1.0, [0, 0.25, 0]) == pytest.approx(2 * vol)
    assert fiber_shift_measure(0.1, 1.0, [0, 0, 0], 20) == 0.0
    assert fiber_shift_measure(0.1, 1.0, [0, 0.25, 0], 40) == pytest.approx(2 * vol, rel=0.05)


def test_fiber_shift_ratio_bounded():
    r = 0.1
    vals = [fiber_shift_bound(r, 1.0, [0, t, 0], 200) for t in (r, r / 2, r / 4)]
    c = np.mean(vals)
    assert all(abs(v - c) <= 0.2 * c for v in vals)


def test_fiber_shift_rejects_coarse_resolution():
    with pytest.raises(ValueError, match="need about"):
        fiber_shift_bound(0.1, 1.0, [0, 0.001, 0], 4)


def test_lp_np_constant_gamma_zero():
    spec = IndicatorSpec.plywood_np(0.25, RotationAngleField.constant(math.pi / 4))
    assert lp_np_discrepancy(spec, 1 / 16, 0.8, 50_000) == 0.0


def test_lp_np_small_radius_vanishes():
    spec = IndicatorSpec.plywood_np(0.0)
    assert lp_np_discrepancy(spec, 1 / 16, 0.8, 50_000) == 0.0


def test_lp_np_rejects_small_r():
    with pytest.raises(ValueError):
        lp_np_discrepancy(IndicatorSpec.plywood_np(), 1 / 16, 0.6, 1000)


def test_voxel_roundtrip(tmp_path):
    spec = IndicatorSpec.perforation(0.3, dim=2)
    dom = DomainBox.unit(2)
    cov = perforation_covering(dom, 1 / 8, 0.5)
    vox = voxelize(spec, 1 / 8, dom, (32, 24), cov)
    meta = export_voxels(tmp_path / "v", vox, dom, 1 / 8, spec)
    back, meta2 = read_voxels(tmp_path / "v")
    assert np.array_equal(back, vox)
    assert meta2["shape"] == [32, 24]
    assert (tmp_path / "v.raw").stat().st_size == 32 * 24


@given(st.floats(0.01, 0.49), st.integers(0, 10 ** 6))
def test_indicator_values_binary(a, seed):
    spec = IndicatorSpec.plywood_np(a)
    x = DomainBox.unit(3).sample(200, np.random.default_rng(seed))
    v = plywood_indicator_np(spec, 1 / 16, x)
    assert set(np.unique(v)) <= {0, 1}


def test_lp_np_halving_ratio_r08():
    spec = IndicatorSpec.plywood_np(0.25)
    d = [lp_np_discrepancy(spec, e, 0.8, 400_000, seed=1) for e in (1 / 16, 1 / 32, 1 / 64)]
    target = 2 ** -(3 * 0.8 - 2)
    for a, b in zip(d, d[1:]):
        assert 0.7 * target <= b / a <= 1.3 * target
