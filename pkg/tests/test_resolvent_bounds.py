import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpgeom.reports import DomainError, QuadratureError
from wpgeom.resolvent_bounds import (BoundParams, QuadratureSpec, bessel_estimate,
                                     heat_kernel_lower_bound, integrate_resolvent_bound,
                                     modified_bessel_k, pn_table, resolvent_lower_bound, tail_bound)


def mp_integral(n, r, a=0, b=mpmath.inf):
    f = lambda t: mpmath.exp(-t) * (2 * mpmath.pi * t) ** (-n) * mpmath.exp(-r ** 2 / t) \
        * mpmath.exp(-(2 * n - 1) * t / 4)
    return float(mpmath.quad(f, [a, r ** 2 / 4 if a == 0 else a, 1, 10, b]))


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("r", [0.3, 1.0, 2.5])
def test_quadrature_matches_direct_integral(n, r):
    assert resolvent_lower_bound(n=n, r=r) == pytest.approx(mp_integral(n, r), abs=1e-10, rel=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_bessel_form_matches_direct_integral(n):
    for r in (0.2, 1.0, 3.0):
        assert bessel_estimate(n, r) == pytest.approx(mp_integral(n, r), rel=1e-9)


def test_modified_bessel_against_mpmath():
    for order in (0, 1, 2):
        for x in (0.01, 1.0, 7.5):
            assert modified_bessel_k(order, x) == pytest.approx(float(mpmath.besselk(order, x)), rel=1e-12)
    with pytest.raises(DomainError):
        modified_bessel_k(0, 0.0)
    with pytest.raises(DomainError):
        modified_bessel_k(0.5, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.floats(0.05, 4.0), st.floats(0.01, 1.0))
def test_monotone_decreasing_in_distance(n, r, dr):
    assert resolvent_lower_bound(n=n, r=r + dr) < resolvent_lower_bound(n=n, r=r)


def test_zero_distance_is_infinite():
    assert resolvent_lower_bound(n=2, r=0.0) == math.inf
    with pytest.raises(DomainError):
        bessel_estimate(2, 0.0)


@pytest.mark.parametrize("bad", [dict(n=0, r=1.0), dict(n=1.5, r=1.0), dict(n=1, r=-1.0),
                                 dict(n=1, r=float("nan"))])
def test_invalid_parameters(bad):
    with pytest.raises(DomainError):
        BoundParams(**bad)


def test_tail_bound_dominates_tail():
    for n in (1, 2):
        for T in (5.0, 12.0):
            assert mp_integral(n, 0.5, a=T) <= tail_bound(n, T)


def test_error_estimate_reported_and_enforced():
    res = integrate_resolvent_bound(BoundParams(1, 1.0))
    assert res.abs_error <= 1e-10
    with pytest.raises(QuadratureError):
        integrate_resolvent_bound(BoundParams(1, 1.0, QuadratureSpec(t_max=2.0)))


def test_heat_kernel_bound_values():
    assert heat_kernel_lower_bound(1, 1.0, 0.0) == pytest.approx(math.exp(-0.25) / (2 * math.pi))
    with pytest.raises(DomainError):
        heat_kernel_lower_bound(1, 0.0, 1.0)


def test_pn_table_columns():
    tab = pn_table(1, 0.1, 5.0, 12)
    assert tab.shape == (12, 4)
    assert np.all(np.diff(tab[:, 1]) < 0)
    np.testing.assert_allclose(tab[:, 3], tab[:, 1] - tab[:, 2])
    assert np.all(tab[:, 3] >= -1e-8)
