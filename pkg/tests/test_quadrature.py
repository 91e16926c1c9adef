import numpy as np
import pytest

from londonlimit.geometry import build_surface, sample_grid
from londonlimit.layer_potentials import assemble_operators
from londonlimit.quadrature import (
    PolarPatchRule,
    RotatedSphereRule,
    gauss_legendre,
    kernel_values,
    pou_window,
    singular_apply,
    smooth_surface_integral,
    trapezoid_periodic,
)

TWO_PI = 2.0 * np.pi


def test_trapezoid_exact_for_trig_polynomials():
    t = np.arange(12) * TWO_PI / 12
    assert trapezoid_periodic(np.cos(t) ** 4) == pytest.approx(TWO_PI * 3.0 / 8.0, rel=1e-14)


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(6, 0.0, 2.0)
    assert w @ x ** 11 == pytest.approx(2.0 ** 12 / 12.0, rel=1e-13)


def test_smooth_integrals(sphere_grid, torus_grid):
    assert smooth_surface_integral(sphere_grid, lambda x: x[:, 2] ** 2) == pytest.approx(4 * np.pi / 3, rel=1e-13)
    # int_T z^2 dS = int r^2 sin^2 u (R + r cos u) r du dv = 2 pi^2 R r^3
    assert smooth_surface_integral(torus_grid, lambda x: x[:, 2] ** 2) == pytest.approx(4 * np.pi ** 2, rel=1e-13)


def test_kernel_symmetries(rng):
    x, y = rng.normal(size=3), rng.normal(size=3)
    nx, ny = rng.normal(size=3), rng.normal(size=3)
    S_xy, D_xy, _ = kernel_values(("S", "D", "Sp"), x, nx, y[None], ny[None])[:, 0]
    S_yx, _, Sp_yx = kernel_values(("S", "D", "Sp"), y, ny, x[None], nx[None])[:, 0]
    assert S_xy == pytest.approx(S_yx)
    assert D_xy == pytest.approx(Sp_yx)
    with pytest.raises(ValueError):
        kernel_values(("T",), x, nx, y[None], ny[None])


def test_pou_window_shape():
    t = np.linspace(0.0, 1.2, 241)
    w = pou_window(t)
    assert w[0] == 1.0
    assert np.all(w[t >= 1.0] == 0.0)
    assert np.all(np.diff(w) <= 1e-15)
    assert np.all((w >= 0.0) & (w <= 1.0))


# -- sphere: every operator has a closed-form spectrum ------------------------


def test_sphere_constant_density(sphere_ops):
    one = np.ones(sphere_ops.grid.n)
    assert np.abs(sphere_ops.D @ one + 0.5).max() < 1e-12
    assert np.abs(sphere_ops.S @ one - 1.0).max() < 1e-12


def test_sphere_harmonic_eigenvalues(sphere_ops, sphere_grid):
    z = sphere_grid.points[:, 2]
    y2 = 1.5 * z ** 2 - 0.5
    assert np.abs(sphere_ops.S @ z - z / 3).max() < 1e-12
    assert np.abs(sphere_ops.Sp @ z + z / 6).max() < 1e-12
    assert np.abs(sphere_ops.Sp @ y2 + y2 / 10).max() < 1e-12


def test_sphere_scaling():
    g = sample_grid(build_surface("sphere", radius=2.0), 16, 16)
    ops = assemble_operators(g)
    assert np.abs(ops.S @ np.ones(g.n) - 2.0).max() < 1e-12
    assert np.abs(ops.D @ np.ones(g.n) + 0.5).max() < 1e-12


# -- torus: Gauss identity converges under refinement -------------------------


def test_torus_gauss_identity_converges(torus_ops):
    errs = []
    for n in (12, 16):
        g = sample_grid(build_surface("torus_rev", R=2.0, r=1.0), n, n)
        errs.append(np.abs(assemble_operators(g).D @ np.ones(g.n) + 0.5).max())
    errs.append(np.abs(torus_ops.D @ np.ones(torus_ops.grid.n) + 0.5).max())
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-5


@pytest.mark.parametrize("kernel", ["S", "D", "Sp"])
def test_singular_apply_matches_assembled_row(torus_ops, torus_grid, kernel, rng):
    sigma = rng.normal(size=3) @ torus_grid.points.T
    k = 37
    got = singular_apply(torus_grid, kernel, sigma, k, PolarPatchRule())
    assert got == pytest.approx(torus_ops.matrix(kernel)[k] @ sigma, rel=1e-10, abs=1e-12)


def test_rule_arguments_are_validated(torus_grid):
    with pytest.raises(ValueError):
        PolarPatchRule(upsample=0)
    with pytest.raises(ValueError):
        PolarPatchRule(patch_fraction=0.4)
    with pytest.raises(ValueError):
        RotatedSphereRule().assemble(torus_grid)
    with pytest.raises(ValueError):
        singular_apply(torus_grid, "T", np.ones(torus_grid.n), 0)
