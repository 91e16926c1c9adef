import numpy as np
import pytest

from londonlimit.geometry import build_surface, sample_grid
from londonlimit.layer_potentials import LoopSource, assemble_operators
from londonlimit.limit_solver import (
    CompatibilityError,
    DipoleSource,
    FluxSpec,
    IncomingField,
    LoopFieldSource,
    MonopoleSource,
    RegionError,
    UniformSource,
    axis_field,
    eval_field,
    genus,
    sheet_current,
    solve_exterior_limit,
    solve_interior_limit,
)

UNIFORM_Z = IncomingField((UniformSource((0.0, 0.0, 1.0)),))


@pytest.fixture(scope="module")
def inner_torus():
    g = sample_grid(build_surface("torus_rev", R=2.0, r=0.5), 24, 24)
    return g, assemble_operators(g)


@pytest.fixture(scope="module")
def sphere_solution(sphere_grid, sphere_ops):
    return solve_exterior_limit(sphere_grid, UNIFORM_Z, operators=sphere_ops)


# -- oracle: perfectly shielding ball in a uniform field -----------------------


def test_sphere_shielding_dipole(sphere_solution):
    assert np.allclose(sphere_solution.dipole_moment(), [0.0, 0.0, -0.5], atol=1e-12)


def test_sphere_exterior_field(sphere_solution):
    x = np.array([[0.0, 0.0, 2.0], [1.5, -1.0, 0.5]])
    m = np.array([0.0, 0.0, -0.5])
    r = np.linalg.norm(x, axis=1, keepdims=True)
    dip = (3 * (x @ m)[:, None] * x / r ** 2 - m) / r ** 3
    assert np.allclose(eval_field(sphere_solution, x), dip, atol=1e-10)


def test_sphere_sheet_current(sphere_solution, sphere_grid):
    gamma = sheet_current(sphere_solution).vectors
    P = sphere_grid.points
    sin = np.hypot(P[:, 0], P[:, 1])
    assert np.abs(np.linalg.norm(gamma, axis=1) - 1.5 * sin).max() < 1e-10
    # gamma0 = B_tan x n runs along +phi; the physical current -gamma0 is diamagnetic
    phi_hat = np.stack([-P[:, 1], P[:, 0], np.zeros(len(P))], 1) / np.maximum(sin, 1e-300)[:, None]
    assert np.all(np.einsum("ki,ki->k", gamma, phi_hat)[sin > 0.1] > 0)
    Bn = np.einsum("ki,ki->k", sphere_solution.total_trace(), sphere_grid.normals)
    assert np.abs(Bn).max() < 1e-12


def test_dipole_moment_requires_plain_exterior(torus_grid, torus_ops):
    sol = solve_exterior_limit(torus_grid, flux=FluxSpec(a=(1.0,)), operators=torus_ops)
    with pytest.raises(ValueError):
        sol.dipole_moment()


# -- torus: circulations -------------------------------------------------------


def test_genus(sphere_grid, torus_grid):
    assert genus(sphere_grid) == 0
    assert genus(torus_grid) == 1


def test_exterior_torus_circulation(torus_grid, torus_ops):
    sol = solve_exterior_limit(torus_grid, flux=FluxSpec(a=(1.0,)), operators=torus_ops)
    assert sol.residuals["circulation"] < 1e-10
    assert sol.residuals["boundary"] < 1e-10
    assert abs(sol.circulations["derived"][0]) < 1e-8


def test_exterior_torus_with_loop(torus_grid, torus_ops):
    inc = IncomingField((LoopFieldSource(LoopSource.circle((0, 0, 2.5), 2.0)),))
    sol = solve_exterior_limit(torus_grid, inc, FluxSpec(a=(0.5,)), operators=torus_ops)
    assert sol.residuals["circulation"] < 1e-8
    assert sol.residuals["boundary"] < 1e-10


def test_interior_axis_field_is_exact(inner_torus):
    g, ops = inner_torus
    sol = solve_interior_limit(g, flux_b=FluxSpec(b=(1.0,)), operators=ops)
    assert np.abs(sol.sigma).max() < 1e-12
    assert np.allclose(sol.total_trace(), axis_field(g.points), atol=1e-12)


def test_flux_count_must_match_genus(torus_grid, torus_ops, sphere_grid, sphere_ops):
    with pytest.raises(ValueError):
        solve_exterior_limit(torus_grid, operators=torus_ops)
    with pytest.raises(ValueError):
        solve_exterior_limit(sphere_grid, flux=FluxSpec(a=(1.0,)), operators=sphere_ops)


def test_source_placement(torus_grid, torus_ops, inner_torus):
    with pytest.raises(RegionError):
        solve_exterior_limit(torus_grid, IncomingField((DipoleSource((2.0, 0, 0), (0, 0, 1.0)),)),
                             FluxSpec(a=(0.0,)), operators=torus_ops)
    g, ops = inner_torus
    with pytest.raises(RegionError):
        solve_interior_limit(g, IncomingField((DipoleSource((0, 0, 0), (0, 0, 1.0)),), "inner"),
                             FluxSpec(b=(0.0,)), operators=ops)


def test_compatibility_is_enforced(inner_torus):
    g, ops = inner_torus
    with pytest.raises(CompatibilityError):
        solve_interior_limit(g, IncomingField((MonopoleSource((2.0, 0, 0), 1.0),), "inner"),
                             FluxSpec(b=(1.0,)), operators=ops)
    sol = solve_interior_limit(g, IncomingField((DipoleSource((2.0, 0, 0), (0, 0, 1.0)),), "inner"),
                               FluxSpec(b=(0.0,)), operators=ops)
    assert sol.residuals["boundary"] < 1e-10


def test_eval_field_region_guard(sphere_solution):
    with pytest.raises(RegionError):
        eval_field(sphere_solution, np.zeros((1, 3)))


def test_incoming_region_validated():
    with pytest.raises(ValueError):
        IncomingField((), "sideways")
