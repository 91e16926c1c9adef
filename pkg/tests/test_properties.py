"""Property-based checks of invariants that hold for any admissible input."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from londonlimit import boundary_layer as bl
from londonlimit import model_problems as mp
from londonlimit.fitting import fit_slope
from londonlimit.harness import parse_config
from londonlimit.harness.manifest import Check, evaluate_check
from londonlimit.layer_potentials import LoopSource, biot_savart
from londonlimit.quadrature import kernel_values

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


@given(slope=st.floats(-3, 3), c=st.floats(1e-3, 1e3), ratio=st.floats(0.2, 0.8))
def test_fit_recovers_power_law(slope, c, ratio):
    lam = ratio ** np.arange(6)
    f = fit_slope(zip(lam, c * lam ** slope))
    assert abs(f.slope - slope) < 1e-9
    assert abs(f.intercept - np.log(c)) < 1e-8


@given(value=st.floats(allow_nan=True, allow_infinity=True), threshold=st.floats(-1e6, 1e6),
       op=st.sampled_from(["lt", "le", "gt", "ge"]))
def test_check_reevaluation_is_stable(value, threshold, op):
    c = Check("x", value, op, threshold)
    assert evaluate_check(c.value, c.op, c.threshold) == c.passed
    if not np.isfinite(value):
        assert not c.passed


@given(r0=st.floats(0.01, 2.0), r=st.floats(-5.0, 5.0))
def test_cutoff_even_and_bounded(r0, r):
    c = bl.CutoffProfile(r0)
    assert c(r) == c(-r)
    assert 0.0 <= c(r) <= 1.0
    if abs(r) <= r0:
        assert c(r) == 1.0
    if abs(r) >= 2 * r0:
        assert c(r) == 0.0


@given(z=st.floats(1e-6, 600.0))
def test_scaled_bessel_matches_scipy(z):
    ref = special.spherical_in(1, z) * np.exp(-z)
    assert abs(mp.i1_scaled(z) - ref) <= 1e-12 * abs(ref)


@settings(max_examples=30, deadline=None)
@given(R=st.floats(0.2, 5.0), q=st.floats(1e-3, 10.0), B0=st.floats(0.1, 10.0))
def test_london_sphere_matching(R, q, B0):
    s = mp.london_sphere(R, q * R, B0)
    assert max(s.continuity_residual().values()) < 1e-12
    # screening: the moment opposes the field and never exceeds the perfect value
    assert -0.5 * B0 * R ** 3 <= s.moment < 0.0
    # linear in the applied field
    s2 = mp.london_sphere(R, q * R, 2 * B0)
    assert abs(s2.moment - 2 * s.moment) <= 1e-12 * abs(s2.moment)


@settings(max_examples=20, deadline=None)
@given(m=st.integers(0, 30), J=st.integers(2, 40))
def test_zeros_interlace(m, J):
    a = mp.bessel_zeros(m, J)
    b = mp.bessel_zeros(m + 1, J)
    assert np.all(a < b)
    assert np.all(b[:-1] < a[1:])


@given(x=vec3, y=vec3, nx=vec3, ny=vec3)
def test_kernel_symmetry(x, y, nx, ny):
    if np.linalg.norm(x - y) < 1e-3:
        return
    Sxy, Dxy = kernel_values(("S", "D"), x, nx, y[None], ny[None])[:, 0]
    Syx, Spyx = kernel_values(("S", "Sp"), y, ny, x[None], nx[None])[:, 0]
    assert np.isclose(Sxy, Syx, rtol=1e-14)
    assert np.isclose(Dxy, Spyx, rtol=1e-12, atol=1e-300)


@settings(max_examples=25, deadline=None)
@given(current=st.floats(-10, 10), radius=st.floats(0.5, 3.0), z=st.floats(-5, 5))
def test_loop_axis_field(current, radius, z):
    loop = LoopSource.circle(radius=radius, current=current)
    Bz = biot_savart(loop, np.array([[0.0, 0.0, z]]))[0, 2]
    exact = current * radius ** 2 / (2.0 * (radius ** 2 + z ** 2) ** 1.5)
    assert abs(Bz - exact) <= 1e-12 * max(1.0, abs(current))


@given(seed=st.integers(0, 2 ** 31), n_lambda=st.integers(1, 20), r0=st.floats(1e-3, 10.0))
def test_config_roundtrip(seed, n_lambda, r0):
    data = {"experiment": "betalayer", "seed": seed,
            "numeric": {"n_lambda": n_lambda, "r0": r0}}
    cfg = parse_config(data)
    assert parse_config(cfg.to_dict()) == cfg
