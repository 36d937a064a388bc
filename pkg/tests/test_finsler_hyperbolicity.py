import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpgeom import finsler_hyperbolicity as fh
from wpgeom.curvature_engine import ks_norm_sq, make_synthetic_model
from wpgeom.reports import DomainError


def test_poincare_curvature_second_order():
    # compare on the points shared by the three nested grids
    errs = []
    for k, pts in enumerate((21, 41, 81)):
        grid, h = fh.disk_grid(1.0, pts, fill=0.5)
        K = fh.discrete_curvature(fh.CurveSample(grid, fh.poincare_metric(grid, 1.0), h))
        step = 2 ** k
        errs.append(np.nanmax(np.abs(K[::step, ::step][1:-1, 1:-1] + 1)))
    assert errs[2] < 1e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_one_dimensional_samples():
    # G = sec^2 x has (log G)'' = 2 sec^2 x, so K = -1/2
    errs = []
    for n in (41, 81):
        x = np.linspace(-1, 1, n)
        K = fh.discrete_curvature(fh.CurveSample(x, 1 / np.cos(x) ** 2, x[1] - x[0]))
        errs.append(np.nanmax(np.abs(K + 0.5)))
    assert errs[1] < 1e-3 and errs[0] / errs[1] > 3.5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_convex_sum_holds_exactly_on_any_grid(seed, count):
    rng = np.random.default_rng(seed)
    grid, h = fh.disk_grid(1.0, 9)
    samples = [fh.CurveSample(grid, np.exp(rng.standard_normal(grid.shape)), h) for _ in range(count)]
    rep = fh.convex_sum_curvature_check(samples, rng.uniform(0.1, 3.0, count))
    assert rep.passed


def test_convex_sum_single_summand_is_equality():
    grid, h = fh.disk_grid(1.0, 31)
    s = fh.CurveSample(grid, fh.poincare_metric(grid, 1.0, 0.9), h)
    assert abs(fh.convex_sum_curvature_check([s], [2.5]).margin) <= 1e-10


@pytest.mark.parametrize("pts", [21, 41])
def test_ahlfors_schwarz_cases(pts):
    grid, h = fh.disk_grid(1.0, pts)
    rho = fh.poincare_metric(grid, 1.0)
    eq = fh.ahlfors_schwarz_check(rho, 1.0, 1.0, grid, h)
    assert eq.passed and abs(eq.margin) <= 1e-10
    # gamma = rho / A with A = 2 is also an equality case
    eq2 = fh.ahlfors_schwarz_check(rho / 2, 2.0, 1.0, grid, h)
    assert eq2.passed and abs(eq2.margin) <= 1e-10
    below = fh.ahlfors_schwarz_check(0.3 * rho, 1.0, 1.0, grid, h)
    assert below.passed and below.margin > 0
    bad = fh.ahlfors_schwarz_check(1.5 * rho, 1.0, 1.0, grid, h)
    assert not bad.passed
    assert bad.details["conclusion_asserted"] is False
    assert bad.details["status"] == "hypothesis not satisfied"


@pytest.fixture(scope="module")
def syn():
    return make_synthetic_model(2, 80, 2, seed=4)


def test_degree_one_is_wp_norm(syn):
    model, A = syn
    assert fh.wp_degree_p(model, A[0], 1) ** 2 == pytest.approx(ks_norm_sq(model, A[0]), rel=1e-12)


def test_degree_p_homogeneous_and_bounded(syn):
    model, A = syn
    for p in (1, 2):
        base = fh.wp_degree_p(model, A[0], p)
        assert fh.wp_degree_p(model, -2.5 * A[0], p) == pytest.approx(2.5 * base, rel=1e-12)
    assert fh.wp_degree_p(model, A[0], 3) == 0.0
    with pytest.raises(DomainError):
        fh.wp_degree_p(model, A[0], 0)


def test_curve_bound_and_model_curvature(syn):
    model, A = syn
    P = model.resolvent_floor()
    for p in (1, 2):
        reps = fh.finsler_curvature_bound_check(model, A[0], p, P, points=15)
        bound, sub = reps
        assert bound.passed and sub.passed
        assert bound.anchor == "eq:curvgp"
        assert bound.details["K0"] < 0
    with pytest.raises(DomainError):
        fh.finsler_curvature_bound_check(model, A[0], 3, P)


def test_curve_sample_validation():
    with pytest.raises(DomainError):
        fh.CurveSample(np.zeros(5), np.ones(4), 0.1)
    with pytest.raises(DomainError):
        fh.CurveSample(np.zeros(5), -np.ones(5), 0.1)
    with pytest.raises(DomainError):
        fh.ahlfors_schwarz_check(np.ones((5, 5)), 0.0, 1.0, np.zeros((5, 5)), 0.1)


def test_svg_is_well_formed():
    x = np.linspace(0, 1, 20)
    svg = fh.svg_line_plot(x, {"a": x ** 2, "b <&>": np.sin(x)}, title="t", xlabel="x", ylabel="y")
    root = ET.fromstring(svg)
    polylines = [e for e in root.iter() if e.tag.endswith("polyline")]
    assert len(polylines) == 2
