import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpgeom import curvature_engine as ce
from wpgeom.curvature_engine import (BundleForm, DegreeError, NonHarmonicError, apply_product,
                                     constant_section, curvature_direct_image,
                                     curvature_pluricanonical, curvature_tangent,
                                     direct_image_estimate, make_synthetic_model, multi_indices,
                                     nakano_check, random_xi, synthetic_sections, tangent_estimate,
                                     wedge_power)
from wpgeom.ks_wp import wp_gram, KSForm


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2 ** 32 - 1))
def test_wedge_power_is_signed_minor(n, seed):
    """A^p at (I, J) equals p! (-1)^(p(p-1)/2) det A[I, J] in the graded convention."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n))
    for p in range(1, n + 1):
        W = wedge_power(A, p, n)
        idx = multi_indices(n, p)
        sign = (-1) ** (p * (p - 1) // 2)
        for v in range(2):
            for a, I in enumerate(idx):
                for b, J in enumerate(idx):
                    exp = sign * math.factorial(p) * np.linalg.det(A[v][np.ix_(I, J)])
                    assert abs(W.coefficients[v, a, b] - exp) < 1e-12 * (1 + abs(exp))
    assert wedge_power(A, n + 1, n) is None


def test_product_degrees_and_errors():
    A = np.ones((3, 2, 2))
    f = BundleForm(np.ones((3, 1, 2)), (0, 1))
    assert apply_product("raise", A, f).degree == (1, 0)
    assert apply_product("wedge", A, f).degree == (1, 2)
    with pytest.raises(DegreeError):
        apply_product("lower", A, f)
    with pytest.raises(DegreeError):
        apply_product("contract", A, f)


def test_lowering_a_single_index_by_hand():
    # n = 2, A = d/dz_0 (x) dzbar_1; psi = dz_0 (a (1, 0)-form).  Lowering removes
    # index 0 from the first group and inserts 1 into the second, with the graded
    # sign (-1)^a = -1 for a = 1.
    A = np.zeros((1, 2, 2), dtype=complex)
    A[0, 0, 1] = 1.0
    psi = BundleForm(np.array([[[1.0], [0.0]]]), (1, 0))
    out = apply_product("lower", A, psi, 2)
    assert out.degree == (0, 1)
    np.testing.assert_array_equal(out.coefficients, [[[0.0, -1.0]]])


@pytest.fixture(scope="module")
def syn2():
    return make_synthetic_model(2, 80, 2, seed=1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_p0_cancellation_both_formulas(n):
    model, A = make_synthetic_model(n, 60, 2, seed=n)
    psi = synthetic_sections(model, 0, 1)
    R = curvature_direct_image(model, 1, 0, A, psi)
    assert R.relative_norm() < 1e-10
    D = curvature_tangent(model, 0, A, [constant_section(model, (0, 0), kind="tangent")])
    assert D.relative_norm() < 1e-10


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("m", [1, 3])
def test_hermitian_and_term_signs(syn2, p, m):
    model, A = syn2
    psi = synthetic_sections(model, p, 3, m)
    R = curvature_direct_image(model, m, p, A, psi)
    assert R.hermitian_defect() < 1e-12
    assert R.term_min_eigenvalue("T1") >= -1e-10 * R.scale
    assert R.term_min_eigenvalue("T2") >= -1e-10 * R.scale
    assert R.term_min_eigenvalue("T3_harmonic") <= 1e-10 * R.scale


def test_large_twist_limit(syn2):
    model, A = syn2
    psi = synthetic_sections(model, 2, 1, 1)
    rel = []
    for m in (10, 1000):
        R = curvature_pluricanonical(model, m, A, psi)
        rel.append(np.max(np.abs(R.entries - R.terms["T1"])) / np.max(np.abs(R.terms["T1"])))
    assert rel[1] < 0.02 * rel[0]
    assert rel[1] < 1e-2


def test_estimates_on_synthetic_model(syn2):
    model, A = syn2
    P = model.resolvent_floor()
    assert P > 0
    for p in (0, 1, 2):
        psi = synthetic_sections(model, p, 1, 1)[0]
        assert direct_image_estimate(model, 1, p, A[0], psi, P).passed
    nu = ce.ks_as_tangent(A[0], 2)
    nxt = apply_product("wedge", A[0], nu, 2)
    assert tangent_estimate(model, 1, A[0], nu, nxt, P).passed


def test_nakano_on_synthetic(syn2):
    model, A = syn2
    psi = synthetic_sections(model, 2, 1, 2)
    R = curvature_pluricanonical(model, 2, A, psi)
    G = np.array([[model.integrate(ce.pointwise_dot(ce._ks_array(a), ce._ks_array(b))) for b in A]
                  for a in A])
    H = np.array([[model.form_inner(a, b) for b in psi] for a in psi])
    rep = nakano_check(R, G, H, model.resolvent_floor(), random_xi((2, 1), 50, seed=3))
    assert rep.passed and rep.anchor == "co:curv1"


def test_rejects_non_harmonic_and_bad_degrees(syn2):
    model, A = syn2
    rng = np.random.default_rng(0)
    bad = BundleForm(rng.standard_normal((model.base.dim, 2, 2)), (1, 1))
    with pytest.raises(NonHarmonicError):
        curvature_direct_image(model, 1, 1, A, [bad])
    good = synthetic_sections(model, 1, 1)[0]
    with pytest.raises(DegreeError):
        curvature_direct_image(model, 1, 2, A, [good])
    with pytest.raises(DegreeError):
        curvature_tangent(model, 3, A, [good])
    with pytest.raises(ValueError):
        curvature_direct_image(model, 0, 1, A, [good])


def test_geometric_model_holomorphic_sectional_negative():
    from wpgeom.fiber_geometry import build_hyperbolic_octagon_fiber
    f = build_hyperbolic_octagon_fiber(3)
    model, mus, _ = ce.make_geometric_model(f)
    D = curvature_tangent(model, 1, mus, [ce.ks_as_tangent(mu, 1) for mu in mus])
    G = wp_gram(mus)
    for i in range(3):
        assert D.entries[i, i, i, i].real / G[i, i].real ** 2 < 0
    psi = ce.geometric_sections(model, f, 1, 0)
    assert curvature_direct_image(model, 1, 0, mus, psi).relative_norm() < 1e-10
    with pytest.raises(ValueError):
        ce.geometric_sections(model, f, 2, 0)
