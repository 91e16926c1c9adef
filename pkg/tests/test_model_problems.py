import numpy as np
import pytest
from scipy import special

from londonlimit import model_problems as mp

K10 = 2.404825557695773


# -- Bessel zeros (oracle: scipy.special.jn_zeros) ------------------------------


@pytest.mark.parametrize("m", [0, 1, 2, 5, 10, 25])
def test_bessel_zeros_match_oracle(m):
    k = mp.bessel_zeros(m, 60)
    ref = special.jn_zeros(m, 60)
    assert np.abs(k - ref).max() < 1e-12 * ref.max()


def test_first_zero_and_bounds():
    assert mp.bessel_zeros(0, 1)[0] == pytest.approx(K10, abs=1e-13)
    for m in range(0, 30, 3):
        assert mp.bessel_zeros(m, 1)[0] > m
    with pytest.raises(ValueError):
        mp.bessel_zeros(-1, 5)
    with pytest.raises(ValueError):
        mp.bessel_zeros(0, 0)


def test_zeros_approach_mcmahon():
    j = np.arange(1, 201)
    k = mp.bessel_zeros(0, 200)
    d = k - (j - 0.25) * np.pi
    assert np.all(np.diff(d) < 0)
    # first McMahon correction 1 / (8 beta); the remainder is O(beta^-3)
    beta = (20 - 0.25) * np.pi
    assert abs(d[19] - 1.0 / (8.0 * beta)) < 1e-6
    assert np.abs(k[20:] - mp.mcmahon(0, j[20:])).max() < 1e-12


def test_disk_zero_table_normalization():
    k, n = mp.disk_zero_table(3, 5)
    # int_0^1 (n J_m(k r))^2 r dr = 1
    r, w = np.polynomial.legendre.leggauss(80)
    r, w = 0.5 * (r + 1), 0.5 * w
    for m in range(4):
        for j in range(5):
            assert w @ (r * (n[m, j] * special.jv(m, k[m, j] * r)) ** 2) == pytest.approx(1.0, rel=1e-12)


# -- disk sum -------------------------------------------------------------------


def test_single_mode_D():
    k = np.array([[K10]])
    spec = mp.DiskSpectrum(0, 1, k, np.ones((1, 1)), np.ones((1, 1)), np.array([K10]))
    for lam in (1e-3, 0.1, 1.0):
        x = (lam * K10) ** 2
        assert mp.disk_Dlambda(spec, lam)["D2"] == pytest.approx(x * x / (1 + x) ** 2, rel=1e-14)


def test_closed_form_matches_quadrature():
    a = mp.disk_spectrum(M=8, J=30)
    b = mp.disk_spectrum_general(lambda x, y: np.exp(x), M=8, J=30)
    assert np.abs(a.a - b.a).max() < 1e-12
    # exp(x) is even in y, so all angular coefficients are real
    assert np.abs(b.a.imag).max() < 1e-14


def test_exp_coefficients_decay_in_order():
    spec = mp.disk_spectrum(M=25, J=40)
    assert spec.c[-1] < 1e-12 * spec.c[0]
    assert np.all(np.diff(spec.c[5:]) < 0)


@pytest.fixture(scope="module")
def exp_spectrum():
    return mp.disk_spectrum(M=25, J=200)


def test_D_monotone_and_first_order(exp_spectrum):
    lams = np.logspace(-3, -1, 5)
    rows = [mp.disk_Dlambda(exp_spectrum, float(l)) for l in lams]
    D = [r["D"] for r in rows]
    assert np.all(np.diff(D) > 0)
    slope = np.polyfit(np.log(lams), np.log([r["D2"] for r in rows]), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)
    assert max(r["tail_change"] for r in rows) < 1e-8


def test_envelope_bounds_D(exp_spectrum):
    for lam in (1e-3, 1e-2):
        assert mp.disk_envelope(exp_spectrum, lam) >= mp.disk_Dlambda(exp_spectrum, lam)["D"]


def test_tail_error_when_unconverged(exp_spectrum):
    with pytest.raises(mp.TailError):
        mp.disk_Dlambda(exp_spectrum, 1e-3, rtol=1e-18)
    with pytest.raises(ValueError):
        mp.disk_Dlambda(exp_spectrum, 0.0)


def test_alpha_partial_sums(exp_spectrum):
    counts = [25, 50, 100, 200]
    for alpha, grows in ((0.2, False), (0.3, True)):
        inc = np.diff(mp.alpha_partial_sums(exp_spectrum, alpha, counts))
        assert (inc[-1] / inc[-2] > 1.0) == grows


# -- spherical Bessel helpers -----------------------------------------------------


def test_i1_scaled():
    z = np.concatenate([np.linspace(1e-4, 5, 50), [10.0, 30.0, 50.0]])
    ref = special.spherical_in(1, z) * np.exp(-z)
    assert np.allclose(mp.i1_scaled(z), ref, rtol=1e-12, atol=0)
    assert abs(mp.i1_scaled(1e-3) * np.exp(1e-3) - 1e-3 / 3.0) < 1e-10
    assert mp.i1_scaled(800.0) == pytest.approx((800.0 - 1.0) / (2 * 800.0 ** 2), rel=1e-14)


def test_i1_log_derivative():
    z = np.array([0.1, 1.0, 7.0, 40.0])
    ref = special.spherical_in(1, z, derivative=True) / special.spherical_in(1, z)
    assert np.allclose(mp.i1_log_derivative(z), ref, rtol=1e-11)


# -- London ball -------------------------------------------------------------------


def _curl(F, x, h=1e-5):
    J = np.empty((3, 3))
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        J[:, a] = (F(x + e) - F(x - e)) / (2 * h)
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]]), np.trace(J)


@pytest.mark.parametrize("lam", [0.05, 0.3, 2.0])
@pytest.mark.parametrize("x", [[0.2, -0.3, 0.4], [0.5, 0.1, -0.6], [1.1, 0.4, 0.9]])
def test_london_fields_fd(lam, x):
    s = mp.london_sphere(1.0, lam, 1.0)
    x = np.array(x, dtype=float)
    curlA, _ = _curl(s.vector_potential, x)
    assert np.allclose(curlA, s.field(x), atol=1e-8)
    curlB, divB = _curl(s.field, x)
    assert abs(divB) < 1e-7
    assert np.allclose(curlB, s.current(x), atol=1e-6 * max(1.0, 1.0 / lam ** 2))


def test_london_continuity_at_surface():
    s = mp.london_sphere(1.0, 0.1, 1.0)
    assert max(s.continuity_residual().values()) < 1e-13
    for n in ([0.6, 0.0, 0.8], [0.0, 1.0, 0.0]):
        n = np.array(n)
        Bi, Bo = s.field((1 - 1e-9) * n), s.field((1 + 1e-9) * n)
        assert np.allclose(Bi, Bo, atol=1e-7)
        assert np.allclose(s.exterior_tangential(n[None])[0], Bo - (Bo @ n) * n, atol=1e-7)


def test_london_limits():
    for lam in (1e-2, 1e-3):
        # thin layer: m = -R^3 B0 / 2 + 3 lam R^2 B0 / 2 + O(lam^2)
        m = mp.london_sphere(1.0, lam, 1.0).moment
        assert m + 0.5 == pytest.approx(1.5 * lam, rel=3 * lam)
    for lam in (100.0, 1000.0):
        # weak screening: m = -R^5 B0 / (30 lam^2) and the interior field is nearly B0
        s = mp.london_sphere(1.0, lam, 1.0)
        assert s.moment == pytest.approx(-1.0 / (30 * lam ** 2), rel=1e-3)
        assert np.allclose(s.field(np.zeros((1, 3)))[0], [0, 0, 1], atol=1e-3 / lam)
    with pytest.raises(ValueError):
        mp.london_sphere(1.0, -1.0, 1.0)


def test_closed_form_against_collocation():
    assert mp.verify_against_bvp(1.0, 1.0, n_pairs=4, seed=3) < 1e-9


def test_richardson_is_exact_on_polynomials():
    h = 0.1 * 0.5 ** np.arange(4)
    vals = 2.0 + 3 * h - h ** 2 + 0.5 * h ** 3
    assert mp.richardson(vals, h, (1, 2, 3)) == pytest.approx(2.0, abs=1e-13)
