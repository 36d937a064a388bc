import math

import numpy as np
import pytest

from wpgeom.fiber_geometry import (OCTAGON_CORNER_RADIUS, MeshError, assemble_laplacian,
                                   build_fiber, build_hyperbolic_octagon_fiber, build_torus_fiber,
                                   complex_laplacian, diameter, mobius_apply, mobius_derivative,
                                   poincare_density, poincare_distance, read_mesh, write_mesh)
from wpgeom.reports import DomainError


@pytest.fixture(scope="module")
def octagon3():
    return build_hyperbolic_octagon_fiber(3)


def test_torus_topology_and_area():
    f = build_torus_fiber(2.0, 12)
    assert f.euler_characteristic() == 0
    assert f.n_vertices == 144
    assert f.area_weights.sum() == pytest.approx(4.0, rel=1e-12)


def test_torus_second_order_convergence():
    target = 4 * math.pi ** 2
    err = [abs(assemble_laplacian(build_torus_fiber(1.0, N), k=6).first_nonzero() - target)
           for N in (8, 16, 32)]
    rates = [math.log2(err[0] / err[1]), math.log2(err[1] / err[2])]
    assert min(rates) > 1.8


def test_complex_normalization_is_half(octagon3):
    real = assemble_laplacian(octagon3)
    cx = complex_laplacian(octagon3)
    np.testing.assert_allclose(cx.eigenvalues, 0.5 * real.eigenvalues, atol=1e-10)
    with pytest.raises(DomainError):
        assemble_laplacian(octagon3, normalization="other")


def test_octagon_gauss_bonnet(octagon3):
    assert octagon3.euler_characteristic() == -2
    assert octagon3.genus == 2
    assert octagon3.area_weights.sum() == pytest.approx(4 * math.pi, rel=1e-10)


def test_side_pairings_are_isometries(octagon3):
    rng = np.random.default_rng(0)
    z = 0.3 * (rng.standard_normal(20) + 1j * rng.standard_normal(20))
    for _, M in octagon3.side_pairings:
        w = mobius_apply(M, z)
        lhs = poincare_density(w) * np.abs(mobius_derivative(M, z)) ** 2
        np.testing.assert_allclose(lhs, poincare_density(z), rtol=1e-10)
        np.testing.assert_allclose(poincare_distance(w[:10], w[10:]),
                                   poincare_distance(z[:10], z[10:]), rtol=1e-9)


def test_glued_copies_map_to_one_point(octagon3):
    f = octagon3
    T = f.local_transition
    z = f.local_coords
    mapped = (T[:, 0, 0] * z + T[:, 0, 1]) / (T[:, 1, 0] * z + T[:, 1, 1])
    first = np.full(f.n_vertices, -1)
    for i, g in enumerate(f.local_to_glued):
        if first[g] < 0:
            first[g] = i
    np.testing.assert_allclose(mapped, mapped[first[f.local_to_glued]], atol=1e-10)
    assert len(z) > f.n_vertices


def test_diameter_bounds(octagon3):
    # graph distances dominate the surface distance; centre to corner is exact
    d = diameter(octagon3)
    corner = 2 * math.atanh(OCTAGON_CORNER_RADIUS)
    assert corner <= d <= 1.2 * corner
    t = diameter(build_torus_fiber(1.0, 16))
    assert math.sqrt(0.5) - 1e-12 <= t <= 1.0 + 1e-12


def test_refinement_keeps_spectrum_stable():
    lam3 = complex_laplacian(build_hyperbolic_octagon_fiber(3), k=4).first_nonzero()
    lam4 = complex_laplacian(build_hyperbolic_octagon_fiber(4), k=4).first_nonzero()
    assert abs(lam3 - lam4) / lam4 < 0.01


def test_mesh_roundtrip(tmp_path, octagon3):
    p = tmp_path / "oct.mesh"
    write_mesh(octagon3, p)
    g = read_mesh(p)
    assert g.n_vertices == octagon3.n_vertices
    np.testing.assert_array_equal(g.triangles, octagon3.triangles)
    np.testing.assert_allclose(g.area_weights, octagon3.area_weights, rtol=1e-14)
    bad = tmp_path / "bad.mesh"
    bad.write_text("OFF 1 2 3\n")
    with pytest.raises(MeshError):
        read_mesh(bad)


def test_build_fiber_dispatch():
    assert build_fiber("torus", 8).kind == "torus"
    with pytest.raises(DomainError):
        build_fiber("sphere", 4)
    with pytest.raises(DomainError):
        build_torus_fiber(1.0, 4)
