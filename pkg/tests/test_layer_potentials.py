import numpy as np
import pytest

from londonlimit.geometry import build_surface, sample_grid
from londonlimit.layer_potentials import (
    LoopSource,
    NearSurfaceWarning,
    SurfaceDensity,
    biot_savart,
    calderon_residual,
    cross_operator,
    dump_matrix,
    eval_gradS,
    eval_S,
    jump_check,
    load_matrix,
    on_surface,
)

# -- oracles: potentials of uniform and z-weighted densities on the unit sphere


@pytest.mark.filterwarnings("ignore::londonlimit.layer_potentials.NearSurfaceWarning")
def test_single_layer_of_unit_density(sphere_grid):
    one = np.ones(sphere_grid.n)
    x_in = np.array([[0.1, -0.2, 0.3], [0.0, 0.0, 0.0]])
    x_out = np.array([[0.0, 0.0, 3.0], [2.0, 2.0, -1.0]])
    assert np.allclose(eval_S(sphere_grid, one, x_in), 1.0, atol=1e-12)
    r = np.linalg.norm(x_out, axis=1)
    assert np.allclose(eval_S(sphere_grid, one, x_out), 1.0 / r, atol=1e-12)
    assert np.allclose(eval_gradS(sphere_grid, one, x_out), -x_out / r[:, None] ** 3, atol=1e-12)


@pytest.mark.filterwarnings("ignore::londonlimit.layer_potentials.NearSurfaceWarning")
def test_gradient_of_dipole_layer(sphere_grid):
    # S[z] = z / 3 inside, z / (3 r^3) outside
    z = sphere_grid.points[:, 2]
    x_in = np.array([[0.2, 0.1, -0.3]])
    assert np.allclose(eval_gradS(sphere_grid, z, x_in), [[0.0, 0.0, 1.0 / 3.0]], atol=1e-12)
    x = np.array([[0.5, -1.0, 2.0]])
    r = np.linalg.norm(x)
    expected = (np.array([0, 0, 1.0]) - 3 * x[0, 2] * x[0] / r ** 2) / (3 * r ** 3)
    assert np.allclose(eval_gradS(sphere_grid, z, x, upsample=2)[0], expected, atol=1e-12)


def test_near_surface_warning(sphere_grid):
    with pytest.warns(NearSurfaceWarning):
        eval_S(sphere_grid, np.ones(sphere_grid.n), np.array([[0.0, 0.0, 1.01]]))


def test_on_surface_validates_inputs(sphere_grid, sphere_ops, torus_grid):
    with pytest.raises(ValueError):
        on_surface(sphere_grid, "S", np.ones(sphere_grid.n + 1), sphere_ops)
    with pytest.raises(ValueError):
        on_surface(sphere_grid, "T", np.ones(sphere_grid.n), sphere_ops)
    with pytest.raises(ValueError):
        on_surface(torus_grid, "S", np.ones(torus_grid.n), sphere_ops)
    with pytest.raises(ValueError):
        SurfaceDensity(sphere_grid, np.full(sphere_grid.n, np.nan))
    out = on_surface(sphere_grid, "Sprime", SurfaceDensity(sphere_grid, np.ones(sphere_grid.n)), sphere_ops)
    assert np.allclose(out.values, -0.5, atol=1e-12)


def test_jump_relations_on_sphere(sphere_grid, sphere_ops):
    sigma = 1.0 + sphere_grid.points[:, 2]
    rep = jump_check(sphere_grid, sigma, sphere_ops, nodes=np.arange(0, sphere_grid.n, 37))
    errs = rep.max_errors()
    assert max(errs.values()) < 1e-6, errs


def test_calderon_identity(sphere_ops, torus_ops):
    assert calderon_residual(sphere_ops) < 1e-12
    assert calderon_residual(torus_ops) < 1e-3


def test_cross_operator_concentric_spheres(sphere_grid):
    big = sample_grid(build_surface("sphere", radius=2.0), 16, 16)
    # unit density on the unit sphere seen from radius 2: S = 1/2, normal derivative -1/4
    S = cross_operator(big, sphere_grid, "S")
    Sp = cross_operator(big, sphere_grid, "Sprime")
    one = np.ones(sphere_grid.n)
    assert np.allclose(S @ one, 0.5, atol=1e-12)
    assert np.allclose(Sp @ one, -0.25, atol=1e-12)
    with pytest.raises(ValueError):
        cross_operator(big, sphere_grid, "T")


def test_biot_savart_circular_loop():
    loop = LoopSource.circle(radius=1.0, current=1.0)
    B = biot_savart(loop, np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))
    assert B[0] == pytest.approx([0.0, 0.0, 0.5], abs=1e-14)
    assert B[1] == pytest.approx([0.0, 0.0, 0.5 / 2 ** 1.5], abs=1e-14)
    assert np.allclose(biot_savart(loop.scaled(3.0), B * 0 + [0.2, 0.1, 0.4]),
                       3.0 * biot_savart(loop, B * 0 + [0.2, 0.1, 0.4]))
    with pytest.raises(ValueError):
        biot_savart(loop, np.array([[1.0, 0.0, 0.0]]))


def test_matrix_dump_roundtrip(tmp_path, rng):
    M = rng.normal(size=(5, 7))
    dump_matrix(tmp_path / "m.bin", M)
    raw = (tmp_path / "m.bin").read_bytes()
    assert len(raw) == 16 + 8 * 35
    assert np.array_equal(load_matrix(tmp_path / "m.bin"), M)
    (tmp_path / "bad.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_matrix(tmp_path / "bad.bin")
    with pytest.raises(ValueError):
        dump_matrix(tmp_path / "v.bin", np.ones(3))
