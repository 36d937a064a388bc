import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpgeom.fiber_geometry import build_hyperbolic_octagon_fiber, complex_laplacian, diameter
from wpgeom.ks_wp import (BorderedMetric, KSForm, beltrami_basis, bordered_determinant_check,
                          bump_source, check_phi_bound, combine, differential_dimension,
                          equivariance_defect, holomorphic_differential_basis,
                          kernel_lower_bound_check, phi_wp_identity, quadratic_differential_basis,
                          random_bordered_metric, random_nonnegative_fields, solve_phi,
                          wp_gram, wp_inner_product)
from wpgeom.reports import DomainError


def cofactor_det(M):
    """Laplace expansion along the first row."""
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    total = 0
    for j in range(n):
        minor = np.delete(np.delete(M, 0, axis=0), j, axis=1)
        total += (-1) ** j * M[0, j] * cofactor_det(minor)
    return total


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_bordered_determinant_against_cofactors(n, seed):
    bm = random_bordered_metric(n, np.random.default_rng(seed))
    rep = bordered_determinant_check(bm)
    assert rep.passed
    phi = rep.details["phi"]
    oracle = cofactor_det(bm.full()) / cofactor_det(bm.g_ab)
    assert phi == pytest.approx(oracle.real, rel=1e-10)
    assert phi > 0
    # the lift is orthogonal to every fiber direction
    np.testing.assert_allclose(bm.g_sb + rep.details["lift"] @ bm.g_ab, 0.0, atol=1e-10)


def test_bordered_metric_validation():
    with pytest.raises(DomainError):
        BorderedMetric(1.0, np.ones(2), np.eye(3))
    with pytest.raises(DomainError):
        BorderedMetric(1.0, np.ones(2), np.array([[1, 1j], [1j, 1]]))
    with pytest.raises(DomainError):
        bordered_determinant_check(BorderedMetric(1.0, np.ones(2), np.zeros((2, 2))))


@pytest.fixture(scope="module")
def fib():
    return build_hyperbolic_octagon_fiber(3)


@pytest.fixture(scope="module")
def spec(fib):
    return complex_laplacian(fib)


@pytest.fixture(scope="module")
def qbasis(fib):
    return quadratic_differential_basis(fib)


def test_riemann_roch_dimensions():
    assert differential_dimension(2, 1) == 2
    assert differential_dimension(2, 2) == 3
    assert differential_dimension(2, 3) == 5
    assert differential_dimension(3, 2) == 6


def test_quadratic_differentials(fib, qbasis):
    assert qbasis.dim == 3
    assert qbasis.gap > 5   # second-order stencil; the default resolution reaches > 10
    for q in qbasis.fields:
        assert equivariance_defect(fib, q, 2) < 1e-10


def test_abelian_differentials(fib):
    b = holomorphic_differential_basis(fib, 1)
    assert b.dim == 2
    assert b.gap > 5
    assert max(equivariance_defect(fib, q, 1) for q in b.fields) < 1e-10


def test_wp_gram_of_beltrami_basis(fib, qbasis):
    mus = beltrami_basis(fib, qbasis)
    G = wp_gram(mus)
    np.testing.assert_allclose(G, G.conj().T, atol=1e-14)
    np.testing.assert_allclose(G, np.eye(3), atol=1e-10)
    c = np.array([1.0, 2j, -0.5])
    mix = combine(mus, c)
    assert wp_inner_product(mix, mix).real == pytest.approx(np.real(c.conj() @ G.T @ c))


def test_ks_form_validation(fib):
    w = fib.area_weights
    with pytest.raises(DomainError):
        KSForm(np.ones((len(w), 2, 3)), w)
    with pytest.raises(DomainError):
        KSForm(np.ones(len(w) + 1), w)
    a = KSForm(np.ones(len(w)), w)
    b = KSForm(np.ones(len(w)), 2 * w)
    with pytest.raises(DomainError):
        wp_inner_product(a, b)
    assert (a + a.scaled(2)).pointwise_norm[0] == pytest.approx(9.0)
    s = KSForm(np.array([[[0, 1], [2, 0]]] * len(w)), w)
    assert s.symmetry_defect() == pytest.approx(1.0)


def test_phi_constant_source(spec):
    chi = np.full(spec.dim, 0.7)
    np.testing.assert_allclose(solve_phi(spec, chi), 0.7, atol=1e-12)
    with pytest.raises(DomainError):
        solve_phi(spec, -chi)


def test_phi_bound_for_random_and_narrow_sources(fib, spec):
    d = diameter(fib)
    for chi in random_nonnegative_fields(spec, 10, seed=1):
        assert check_phi_bound(solve_phi(spec, chi), chi, spec, d).passed
    chi = bump_source(fib, 5, 0.4)
    rep = check_phi_bound(solve_phi(spec, chi), chi, spec, d)
    assert rep.passed and rep.anchor == "eq:est"


def test_kernel_floor_and_wp_identity(fib, spec, qbasis):
    assert kernel_lower_bound_check(spec, diameter(fib)).passed
    for mu in beltrami_basis(fib, qbasis):
        assert phi_wp_identity(spec, mu).passed
