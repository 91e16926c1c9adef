import numpy as np
import pytest

from londonlimit.geometry import build_surface, sample_grid
from londonlimit.layer_potentials import assemble_operators, eval_S
from londonlimit.spectral_checks import (
    SpectrumReport,
    b_spectrum_from_sprime,
    block_operators,
    equilibrium_density,
    equilibrium_potential_spread,
    resolved_basis,
    sphere_oracle,
    sphere_spectrum_errors,
    sprime_spectrum,
    thinshell_B_spectrum,
)


def test_sphere_oracle_multiplicities():
    s, sp = sphere_oracle(3)
    assert len(s) == 16
    assert list(sp[:4]) == pytest.approx([-0.5, -1 / 6, -1 / 6, -1 / 6])
    assert np.allclose(s, -2 * sp)


def test_sphere_spectrum_matches_oracle(sphere_grid, sphere_ops):
    rep = sprime_spectrum(sphere_grid, sphere_ops)
    errs = sphere_spectrum_errors(rep, n_max=8)
    assert errs["S"] < 1e-7 and errs["Sp"] < 1e-7
    assert rep.flags["contained"]
    assert rep.flags["minus_half"]["simple"]
    B = b_spectrum_from_sprime(rep)
    assert B["contained"] and B["zero_simple"]


def test_resolved_basis_is_orthonormal(sphere_grid):
    Q = resolved_basis(sphere_grid)
    L = min(sphere_grid.nu - 1, sphere_grid.nv // 2 - 1)
    assert Q.shape == (sphere_grid.n, (L + 1) ** 2)
    assert np.allclose(Q.T @ Q, np.eye(Q.shape[1]), atol=1e-12)


def test_torus_spectrum(torus_grid, torus_ops):
    rep = sprime_spectrum(torus_grid, torus_ops)
    assert rep.flags["contained"]
    assert rep.flags["minus_half"]["simple"]
    assert rep.flags["min"] == pytest.approx(-0.5, abs=1e-5)
    assert rep.nonsymmetric_imag < 1e-3


def test_equilibrium_density_sphere(sphere_ops):
    g0 = equilibrium_density(sphere_ops)
    assert np.allclose(g0, 1.0, atol=1e-12)
    probes = np.array([[0.1, 0.2, 0.0], [0.0, -0.3, 0.2], [0.0, 0.0, 0.0]])
    assert equilibrium_potential_spread(sphere_ops, probes) < 1e-12


def test_equilibrium_density_torus(torus_grid, torus_ops):
    g0 = equilibrium_density(torus_ops)
    # the null vector is exact only up to the quadrature error of the Gauss identity
    assert np.abs(torus_ops.Sp @ g0 + 0.5 * g0).max() < 1e-5 * np.abs(g0).max()
    probes = np.array([[2.0, 0.0, 0.0], [0.0, 2.3, 0.2], [-1.6, 0.0, -0.3]])
    vals = eval_S(torus_grid, g0, probes, upsample=2, check=False)
    assert np.std(vals) / abs(np.mean(vals)) < 1e-4


def test_nested_tori_spectrum():
    outer = sample_grid(build_surface("torus_rev", R=2.0, r=1.0), 16, 16)
    inner = sample_grid(build_surface("torus_rev", R=2.0, r=0.5), 16, 16).flipped()
    ops = block_operators((outer, inner))
    rep = sprime_spectrum((outer, inner), ops, check_nonsymmetric=False)
    T = thinshell_B_spectrum(rep)
    assert T["contained"]
    assert T["zero_simple"] and T["minus_one_simple"]
    assert abs(T["bulk_median"] + 0.5) < 0.05
    with pytest.raises(ValueError):
        b_spectrum_from_sprime(rep)


def test_gap_multiplicity_logic():
    ev = np.array([-0.5, -0.4999, -0.2, 0.1])
    rep = SpectrumReport(ev, ev, 1e-6, 0.0, 0.0, 1)
    g = rep.gap_multiplicity(-0.5)
    assert g["count"] == 1 and g["simple"]
    rep2 = SpectrumReport(ev, ev, 1e-4, 0.0, 0.0, 1)
    g2 = rep2.gap_multiplicity(-0.5)
    assert g2["count"] == 2 and not g2["simple"]
    with pytest.raises(ValueError):
        thinshell_B_spectrum(rep)
