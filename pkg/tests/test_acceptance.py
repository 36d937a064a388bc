"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary)
and asserts at the stated tolerance.
"""

import math
import time

import mpmath
import numpy as np
import pytest

from wpgeom import curvature_engine as ce
from wpgeom import finsler_hyperbolicity as fh
from wpgeom.fiber_geometry import (assemble_laplacian, build_hyperbolic_octagon_fiber,
                                   build_torus_fiber, complex_laplacian, diameter)
from wpgeom.ke_solver import check_c0_estimate, make_background, solve_ke
from wpgeom.ks_wp import (beltrami_basis, bordered_determinant_check, check_phi_bound,
                          quadratic_differential_basis, random_bordered_metric,
                          random_nonnegative_fields, solve_phi, wp_gram)
from wpgeom.reports import ResonanceError
from wpgeom.resolvent_bounds import bessel_estimate, resolvent_lower_bound
from wpgeom.spectral_core import resolvent_apply, synthetic, verify_resolvent_heat_identity

DEFAULT_RESOLUTION = 4


@pytest.fixture(scope="module")
def octagon():
    return build_hyperbolic_octagon_fiber(DEFAULT_RESOLUTION)


@pytest.fixture(scope="module")
def octagon_spec(octagon):
    return complex_laplacian(octagon)


@pytest.fixture(scope="module")
def octagon_diam(octagon):
    return diameter(octagon)


@pytest.fixture(scope="module")
def geometric(octagon, octagon_spec):
    basis = quadratic_differential_basis(octagon)
    model, mus, basis = ce.make_geometric_model(octagon, octagon_spec, basis)
    return model, mus, basis


def test_01_closed_form(record_criterion):
    t0 = time.perf_counter()
    errs = []
    for r in (0.1, 0.5, 1.0, 2.0, 5.0):
        oracle = float(mpmath.besselk(0, mpmath.sqrt(5) * r) / mpmath.pi)
        errs.append(abs(resolvent_lower_bound(n=1, r=r) - oracle))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-8 and dt < 1.0
    record_criterion(1, ok, f"max |P1 - K0(sqrt5 r)/pi| = {max(errs):.2e}, {dt:.3f} s")
    assert ok


def test_02_bessel_dominance(record_criterion):
    worst = math.inf
    for n in (2, 3):
        for r in np.linspace(0.1, 5.0, 50):
            worst = min(worst, resolvent_lower_bound(n=n, r=float(r)) - bessel_estimate(n, float(r)))
    ok = worst >= -1e-8
    record_criterion(2, ok, f"min P_n - estimate = {worst:.2e}")
    assert ok


def test_03_resolvent_heat_identity(record_criterion):
    t0 = time.perf_counter()
    spec = assemble_laplacian(build_torus_fiber(1.0, 64))
    pairs = np.random.default_rng(2024).integers(0, spec.dim, size=(100, 2))
    rep = verify_resolvent_heat_identity(spec, pairs)
    dt = time.perf_counter() - t0
    err = rep.details["max_error"]
    ok = err < 1e-8 and dt < 30.0
    record_criterion(3, ok, f"max error {err:.2e} over 100 pairs, {dt:.1f} s at resolution 64")
    assert ok


def test_04_torus_calibration(record_criterion):
    target = 4 * math.pi ** 2
    errs = {}
    for N in (16, 32, 64):
        lam1 = assemble_laplacian(build_torus_fiber(1.0, N), k=6).first_nonzero()
        errs[N] = abs(lam1 - target)
    rel64 = errs[64] / target
    orders = [math.log2(errs[16] / errs[32]), math.log2(errs[32] / errs[64])]
    ok = rel64 < 0.02 and min(orders) > 1.8
    record_criterion(4, ok, f"rel error {rel64:.2e} at 64, observed orders "
                            f"{orders[0]:.2f}, {orders[1]:.2f}")
    assert ok


def test_05_octagon_topology(record_criterion, octagon):
    area = float(octagon.area_weights.sum())
    rel = abs(area / (4 * math.pi) - 1)
    chi = octagon.euler_characteristic()
    ok = rel < 0.01 and chi == -2
    record_criterion(5, ok, f"area/4pi - 1 = {rel:.2e}, chi = {chi}")
    assert ok


def test_06_elliptic_positivity(record_criterion, octagon_spec, octagon_diam):
    t0 = time.perf_counter()
    P = resolvent_lower_bound(n=1, r=octagon_diam)
    worst = math.inf
    for chi in random_nonnegative_fields(octagon_spec, 50, seed=99):
        phi = solve_phi(octagon_spec, chi)
        rep = check_phi_bound(phi, chi, octagon_spec, octagon_diam, p_value=P)
        worst = min(worst, rep.margin)
    dt = time.perf_counter() - t0
    ok = worst >= -1e-6 and dt < 120
    record_criterion(6, ok, f"min phi - P1(d) int chi = {worst:.3e}, {dt:.1f} s")
    assert ok


def test_07_ke_solver(record_criterion, octagon):
    bg = make_background(octagon, epsilon=0.05)
    sol = solve_ke(octagon, bg, tol=1e-10)
    pw, sup = check_c0_estimate(sol.u, bg.F, bg)
    ok = (sol.residual < 1e-10 and sol.steps <= 8 and pw.margin >= -1e-12
          and float(np.max(sol.u)) <= float(np.max(-bg.F)) + 1e-8)
    record_criterion(7, ok, f"residual {sol.residual:.1e} in {sol.steps} steps, pointwise margin "
                            f"{pw.margin:.1e}, sup margin {sup.margin:.3e}")
    assert ok


def test_08_bordered_determinant(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for n in (1, 2, 3, 5):
        for _ in range(1000):
            rep = bordered_determinant_check(random_bordered_metric(n, rng))
            worst = max(worst, rep.details["relative_error"])
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 5.0
    record_criterion(8, ok, f"max relative error {worst:.2e} over 4000 instances, {dt:.2f} s")
    assert ok


def test_09_quadratic_differential_kernel(record_criterion, geometric):
    basis = geometric[2]
    ok = basis.dim == 3 and basis.gap >= 10
    record_criterion(9, ok, f"dim {basis.dim}, sigma4/sigma3 = {basis.gap:.1f}")
    assert ok


def test_10_curvature_cancellations(record_criterion, octagon, geometric):
    model, mus, _ = geometric
    vals = []
    psi = ce.geometric_sections(model, octagon, 1, 0)
    vals.append(ce.curvature_direct_image(model, 1, 0, mus, psi).relative_norm())
    nu = [ce.constant_section(model, (0, 0), kind="tangent")]
    vals.append(ce.curvature_tangent(model, 0, mus, nu).relative_norm())
    smodel, A = ce.make_synthetic_model(2, 120, 2, seed=10)
    psi = ce.synthetic_sections(smodel, 0, 1)
    vals.append(ce.curvature_direct_image(smodel, 1, 0, A, psi).relative_norm())
    nu = [ce.constant_section(smodel, (0, 0), kind="tangent")]
    vals.append(ce.curvature_tangent(smodel, 0, A, nu).relative_norm())
    ok = max(vals) <= 1e-8
    record_criterion(10, ok, "||R||/scale = " + ", ".join(f"{v:.1e}" for v in vals)
                     + " (geometric direct/dual, synthetic direct/dual)")
    assert ok


def test_11_nakano_bound(record_criterion, octagon, geometric, octagon_diam):
    model, mus, _ = geometric
    P = resolvent_lower_bound(n=1, r=octagon_diam)
    G = wp_gram(mus)
    margins = []
    for m in (1, 2, 5):
        psi = ce.geometric_sections(model, octagon, m, 1)
        R = ce.curvature_pluricanonical(model, m, mus, psi)
        H = np.array([[model.form_inner(a, b) for b in psi] for a in psi])
        rep = ce.nakano_check(R, G, H, P, ce.random_xi((len(mus), len(psi)), 100, seed=m))
        margins.append(rep.margin / R.scale)
    ok = min(margins) >= -1e-6
    record_criterion(11, ok, "min margin/scale for m=1,2,5: "
                     + ", ".join(f"{v:.3f}" for v in margins))
    assert ok


def test_12_wp_negativity(record_criterion, geometric):
    model, mus, _ = geometric
    D = ce.curvature_tangent(model, 1, mus, [ce.ks_as_tangent(mu, 1) for mu in mus])
    G = wp_gram(mus)
    rng = np.random.default_rng(12)
    dirs = list(np.eye(len(mus), dtype=complex))
    dirs += [rng.standard_normal(len(mus)) + 1j * rng.standard_normal(len(mus)) for _ in range(100)]
    worst = -math.inf
    for c in dirs:
        val = np.einsum("ijlk,i,j,l,k->", D.entries, c, c.conj(), c.conj(), c).real
        worst = max(worst, val / float(np.real(c.conj() @ G.T @ c)) ** 2)
    ok = worst < 0
    record_criterion(12, ok, f"max holomorphic sectional curvature {worst:.4f} over {len(dirs)} directions")
    assert ok


def test_13_convex_sum_and_ahlfors_schwarz(record_criterion):
    lines, ok = [], True
    rng = np.random.default_rng(13)
    for pts in (21, 41):
        grid, h = fh.disk_grid(1.0, pts)
        rho = fh.poincare_metric(grid, 1.0, 0.9)
        inside = np.isfinite(rho)
        c = rng.standard_normal(2)
        other = np.where(inside, np.exp(c[0] * grid.real + c[1] * grid.imag) * (1 + np.abs(grid) ** 2),
                         np.nan)
        s1, s2 = fh.CurveSample(grid, rho, h), fh.CurveSample(grid, other, h)
        conv = fh.convex_sum_curvature_check([s1, s2], [0.7, 1.9])
        single = fh.convex_sum_curvature_check([s1], [0.7])
        below = fh.ahlfors_schwarz_check(0.5 * rho, 1.0, 1.0, grid, h)
        equal = fh.ahlfors_schwarz_check(rho, 1.0, 1.0, grid, h)
        ok &= conv.passed and below.passed and equal.passed
        ok &= abs(single.margin) <= 1e-10 and abs(equal.margin) <= 1e-10
        lines.append(f"{pts}pt: convex {conv.margin:.1e}, single {single.margin:.0e}, "
                     f"AS equality {equal.margin:.0e}")
    record_criterion(13, ok, "; ".join(lines))
    assert ok


def test_14_resonance_safety(record_criterion):
    lam = np.array([0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0])
    spec = synthetic(lam, seed=14)
    m = 2.0
    rejected = 0
    for j in np.nonzero(lam <= m)[0]:
        x = spec.eigenvectors[:, j] + spec.eigenvectors[:, -1]
        try:
            resolvent_apply(spec, -m, x)
        except ResonanceError:
            rejected += 1
    clean = spec.eigenvectors[:, 4] + 2 * spec.eigenvectors[:, -1]
    y = resolvent_apply(spec, -m, clean)
    expected = spec.eigenvectors[:, 4] / (3.0 - m) + 2 * spec.eigenvectors[:, -1] / (8.0 - m)
    ok = rejected == int(np.sum(lam <= m)) and np.allclose(y, expected, atol=1e-12)
    record_criterion(14, ok, f"rejected {rejected}/{int(np.sum(lam <= m))} resonant inputs, "
                             f"admissible input solved")
    assert ok
