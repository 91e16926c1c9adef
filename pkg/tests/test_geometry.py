import numpy as np
import pytest

from londonlimit.geometry import (
    GeometryError,
    NearestPointError,
    build_collar,
    build_surface,
    centerline,
    cycle_integral,
    estimate_reach,
    lagrange_diff_matrix,
    lagrange_interp_matrix,
    nearest_point,
    periodic_diff_matrix,
    periodic_interp_matrix,
    poloidal_cycle,
    sample_grid,
    toroidal_cycle,
)
from londonlimit.limit_solver import axis_field

TWO_PI = 2.0 * np.pi


# -- oracles: closed-form areas, volumes, distances ---------------------------


def test_sphere_area_and_outward_normals(sphere_grid):
    assert sphere_grid.area == pytest.approx(4.0 * np.pi, rel=1e-12)
    n = sphere_grid.normals
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-14)
    assert np.allclose(n, sphere_grid.points, atol=1e-13)


def test_torus_area_and_normals(torus_grid):
    assert torus_grid.area == pytest.approx(8.0 * np.pi ** 2, rel=1e-13)
    P = torus_grid.points
    rho = np.hypot(P[:, 0], P[:, 1])
    core = np.stack([2.0 * P[:, 0] / rho, 2.0 * P[:, 1] / rho, np.zeros(len(P))], 1)
    assert np.allclose(torus_grid.normals, P - core, atol=1e-13)


def test_flipped_grid_reverses_normals(torus_grid):
    f = torus_grid.flipped()
    assert np.allclose(f.normals, -torus_grid.normals)
    assert np.allclose(f.points, torus_grid.points)


def test_degenerate_and_unknown_surfaces():
    with pytest.raises(GeometryError):
        build_surface("torus_rev", R=1.0, r=1.0)
    with pytest.raises(GeometryError):
        build_surface("sphere", radius=-1.0)
    with pytest.raises(GeometryError):
        build_surface("klein_bottle")
    with pytest.raises(GeometryError):
        build_surface("sphere", radius=1.0, extra=2)


def test_spectral_derivative_of_trig_polynomial(torus_grid):
    U, V = torus_grid.param_nodes()
    f = np.sin(2 * U) * np.cos(3 * V)
    assert np.allclose(torus_grid.diff_u(f.ravel()).reshape(U.shape), 2 * np.cos(2 * U) * np.cos(3 * V),
                       atol=1e-11)
    assert np.allclose(torus_grid.diff_v(f.ravel()).reshape(U.shape), -3 * np.sin(2 * U) * np.sin(3 * V),
                       atol=1e-11)


def test_periodic_interpolation_and_differentiation():
    n = 16
    t = np.arange(n) * TWO_PI / n
    f = np.cos(3 * t) + 0.5 * np.sin(t)
    xq = np.array([0.1, 1.7, 5.9])
    assert np.allclose(periodic_interp_matrix(xq, n) @ f, np.cos(3 * xq) + 0.5 * np.sin(xq), atol=1e-13)
    assert np.allclose(periodic_diff_matrix(n) @ f, -3 * np.sin(3 * t) + 0.5 * np.cos(t), atol=1e-12)


def test_lagrange_matrices_exact_for_polynomials():
    x = np.cos(np.pi * (np.arange(9) + 0.5) / 9)
    f = x ** 5 - 2 * x ** 2
    xq = np.array([-0.3, 0.45])
    assert np.allclose(lagrange_interp_matrix(xq, x) @ f, xq ** 5 - 2 * xq ** 2, atol=1e-13)
    assert np.allclose(lagrange_diff_matrix(x) @ f, 5 * x ** 4 - 4 * x, atol=1e-11)


@pytest.mark.parametrize("x, expected", [
    ([3.2, 0.0, 0.0], 0.2),
    ([2.7, 0.0, 0.0], -0.3),
    ([0.0, 2.0, 0.5], -0.5),
    ([0.3, 0.0, 0.0], 0.7),
])
def test_nearest_point_signed_distance(torus_grid, x, expected):
    u, v, d = nearest_point(torus_grid.surface, np.array(x, dtype=float), torus_grid)
    assert d == pytest.approx(expected, abs=1e-10)


def test_nearest_point_on_degenerate_axis_raises(torus_grid):
    # every point of the inner equator is a foot point of the origin
    with pytest.raises(NearestPointError):
        nearest_point(torus_grid.surface, np.zeros(3), torus_grid)


def test_reach_of_torus(torus_grid):
    reach = estimate_reach(torus_grid)
    assert 0.9 <= reach <= 1.0 + 1e-12


def test_collar_volume_matches_shell(torus_grid):
    r0 = 0.4
    c = build_collar(torus_grid, r0)
    exact = 2.0 * np.pi ** 2 * 2.0 * (1.0 - (1.0 - 2 * r0) ** 2)
    assert c.volume == pytest.approx(exact, rel=1e-12)
    assert c.rho.min() >= -2 * r0 and c.rho.max() <= 0.0


def test_collar_rejects_depth_beyond_reach(torus_grid):
    with pytest.raises(GeometryError):
        build_collar(torus_grid, 0.6, reach=1.0)


def test_cycles_link_the_axis_once(torus_grid):
    s = torus_grid.surface
    # axis_field has unit circulation around the z axis and none around a meridian
    assert cycle_integral(axis_field, toroidal_cycle(s, offset=0.3)) == pytest.approx(1.0, abs=1e-12)
    assert cycle_integral(axis_field, poloidal_cycle(s, offset=0.3)) == pytest.approx(0.0, abs=1e-12)
    assert cycle_integral(axis_field, centerline(s)) == pytest.approx(1.0, abs=1e-12)


def test_twisted_torus_is_embedded_and_sampled():
    g = sample_grid(build_surface("twisted_torus"), 24, 24)
    assert g.area > 0
    assert np.all(np.isfinite(g.normals))
    assert np.allclose(np.linalg.norm(g.normals, axis=1), 1.0)
    assert estimate_reach(g) > 0.0
