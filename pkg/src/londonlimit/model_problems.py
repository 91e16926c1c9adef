"""Two semi-analytic problems with known finite-lambda answers.

Unit disk
    ``D_lam^2 = sum_{m, j} lam^4 k^4 |a_{j,m}|^2 / (1 + lam^2 k^2)^2`` where
    ``k_{j,m}`` are the zeros of ``J_m`` and ``a_{j,m}`` the Dirichlet
    eigen-coefficients of a test function.  For ``u = exp(x)`` the
    coefficients are closed form (a Lommel integral),
    ``|a_{j,m}| = sqrt(2) I_m(1) k / (k^2 + 1)``.

London sphere
    A ball of radius ``R`` in the uniform field ``B0 e_z``.  With
    ``A = a(r) sin(theta) e_phi`` the interior obeys
    ``a'' + 2 a' / r - 2 a / r^2 = a / lam^2``, so ``a = C i1(r / lam)``;
    outside ``a = B0 r / 2 + m / r^2``.  Continuity of ``a`` and ``a'``
    (equivalently of ``B . n`` and the tangential field) gives the Robin
    condition ``a'(R) + 2 a(R) / R = 3 B0 / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special
from scipy.integrate import quad

from .fitting import fit_slope

# ---------------------------------------------------------------------------
# Bessel zeros
# ---------------------------------------------------------------------------


class BesselZeroError(RuntimeError):
    pass


class TailError(RuntimeError):
    """The coefficient sum is not converged to the requested tolerance."""


def mcmahon(m: int, j) -> np.ndarray:
    """Large-``j`` expansion of ``k_{j,m}`` (accurate once ``j >> m``)."""
    b = (np.asarray(j, dtype=float) + 0.5 * m - 0.25) * np.pi
    mu = 4.0 * m * m
    e = 8.0 * b
    return (b - (mu - 1.0) / e - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e ** 3)
            - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * e ** 5))


def _jv_and_slope(m, x):
    return special.jv(m, x), 0.5 * (special.jv(m - 1, x) - special.jv(m + 1, x))


def bessel_zeros(m: int, J: int, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """First ``J`` positive zeros of ``J_m``.

    Sign changes are bracketed on a grid starting at ``x = m`` (no zero lies
    below it), then refined by safeguarded Newton steps that fall back to
    bisection whenever an iterate leaves its bracket.
    """
    if m < 0 or J < 1:
        raise ValueError("need m >= 0 and J >= 1")
    h = 0.25
    start = max(float(m), 1e-3)
    stop = mcmahon(m, J) + 4.0 * np.pi + m
    xs = np.arange(start, stop + h, h)
    vals = special.jv(m, xs)
    idx = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0][:J]
    if len(idx) < J:
        raise BesselZeroError(f"found only {len(idx)} sign changes for m={m}")
    lo, hi = xs[idx].copy(), xs[idx + 1].copy()
    flo = vals[idx].copy()
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f, df = _jv_and_slope(m, x)
        same = np.signbit(f) == np.signbit(flo)
        lo = np.where(same, x, lo)
        flo = np.where(same, f, flo)
        hi = np.where(same, hi, x)
        step = f / df
        xn = x - step
        bad = ~((xn > lo) & (xn < hi)) | ~np.isfinite(xn)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        done = np.abs(xn - x) <= 4.0 * np.finfo(float).eps * xn
        x = xn
        if np.all(done):
            break
    res = np.abs(special.jv(m, x))
    if res.max() > tol:
        raise BesselZeroError(f"Newton residual {res.max():.2e} for m={m}")
    if np.any(np.diff(x) <= 0.0) or x[0] <= m:
        raise BesselZeroError(f"zeros of J_{m} are not strictly increasing above m")
    return x


# ---------------------------------------------------------------------------
# Disk
# ---------------------------------------------------------------------------


def _exp_x_amp2(m: int, k):
    k = np.asarray(k, dtype=float)
    return 2.0 * special.iv(m, 1.0) ** 2 * k * k / (k * k + 1.0) ** 2


@dataclass(frozen=True, eq=False)
class DiskSpectrum:
    """Dirichlet eigen-data of the unit disk for one real test function.

    Orders ``m = 0..M`` are stored; ``m`` and ``-m`` contribute equally for a
    real function, which ``order_weights`` accounts for.  ``c[m]`` bounds
    ``|a_{j,m}| k_{j,m}`` for every ``j``, including zeros beyond ``J``.  ``amp2(m, k)``
    models ``|a|^2`` beyond the last computed zero (exact for ``exp(x)``,
    the leading asymptotic ``2 |u_m(1)|^2 / k^2`` otherwise).
    """

    M: int
    J: int
    k: np.ndarray
    n: np.ndarray
    a: np.ndarray
    c: np.ndarray
    amp2: Callable[[int, np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    label: str = "exp(x)"

    @property
    def order_weights(self) -> np.ndarray:
        w = np.full(self.M + 1, 2.0)
        w[0] = 1.0
        return w

    @property
    def mu(self) -> np.ndarray:
        return self.k ** 2


def disk_zero_table(M: int, J: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.array([bessel_zeros(m, J) for m in range(M + 1)])
    n = np.sqrt(2.0) / np.abs(special.jv(np.arange(M + 1)[:, None] + 1, k))
    return k, n


def disk_spectrum(M: int = 25, J: int = 200) -> DiskSpectrum:
    """Closed-form coefficients of ``u = exp(x) = sum_m I_m(r) e^{i m theta}``."""
    k, n = disk_zero_table(M, J)
    ms = np.arange(M + 1)[:, None]
    jp = special.jv(ms + 1, k)
    a = n * k * jp * special.iv(ms, 1.0) / (k * k + 1.0)
    # |a| k = sqrt(2) I_m(1) k^2 / (k^2 + 1) increases toward its supremum sqrt(2) I_m(1)
    c = np.maximum((np.abs(a) * k).max(axis=1), np.sqrt(2.0) * special.iv(np.arange(M + 1), 1.0))
    return DiskSpectrum(M, J, k, n, a, c, _exp_x_amp2, "exp(x)")


def _angular_modes(u, r, M: int, n_theta: int):
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    vals = u(r[:, None] * np.cos(th)[None], r[:, None] * np.sin(th)[None])
    return np.fft.fft(vals, axis=1)[:, :M + 1] / n_theta


def _radial_rule(panels: int, order: int = 64):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    r = (edges[:-1, None] + 0.5 * h[:, None] * (x[None] + 1.0)).ravel()
    wr = (0.5 * h[:, None] * w[None]).ravel()
    return r, wr


def disk_spectrum_general(u: Callable, M: int = 25, J: int = 60, rtol: float = 1e-12,
                          n_theta: int | None = None, label: str = "custom") -> DiskSpectrum:
    """Coefficients of a smooth real ``u(x, y)`` by quadrature.

    Radial integrals use 64-point Gauss-Legendre panels; the panel count
    doubles until successive coefficient tables agree to ``rtol``.
    """
    n_theta = n_theta or 4 * (M + 1)
    k, n = disk_zero_table(M, J)
    ms = np.arange(M + 1)

    def coeffs(panels):
        r, wr = _radial_rule(panels)
        um = _angular_modes(u, r, M, n_theta)
        out = np.empty(k.shape, dtype=complex)
        for m in ms:
            Jk = special.jv(m, k[m][:, None] * r[None])
            out[m] = n[m] * (Jk @ (wr * r * um[:, m]))
        return out

    panels = max(2, int(np.ceil(k.max() / 20.0)))
    prev = coeffs(panels)
    for _ in range(8):
        panels *= 2
        cur = coeffs(panels)
        if np.abs(cur - prev).max() <= rtol * max(np.abs(cur).max(), 1e-300):
            break
        prev = cur
    else:
        raise TailError("radial quadrature did not converge")
    u1 = np.abs(_angular_modes(u, np.array([1.0]), M, n_theta)[0])
    c = np.maximum((np.abs(cur) * k).max(axis=1), np.sqrt(2.0) * u1)

    def amp2(m, kk):
        return 2.0 * u1[m] ** 2 / np.asarray(kk, dtype=float) ** 2

    return DiskSpectrum(M, J, k, n, cur, c, amp2, label)


def _tail(g: Callable[[np.ndarray], np.ndarray], j0: int, lam: float) -> float:
    """``sum_{j > j0} g(j)`` by the midpoint Euler-Maclaurin formula."""
    t0 = j0 + 0.5
    t_peak = max(t0 + 1.0, 10.0 / (np.pi * lam))
    f = lambda t: float(g(np.array([t]))[0])  # noqa: E731
    i1, _ = quad(f, t0, t_peak, epsabs=0.0, epsrel=1e-13, limit=400)
    i2, _ = quad(f, t_peak, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    h = 0.25
    dg = (f(t0 + h) - f(t0 - h)) / (2.0 * h)
    return i1 + i2 + dg / 24.0


def _dsum(spec: DiskSpectrum, lam: float, J: int, envelope: bool, with_tail: bool) -> np.ndarray:
    """Per-order contributions to ``D^2`` using the first ``J`` zeros."""
    out = np.zeros(spec.M + 1)
    for m in range(spec.M + 1):
        k = spec.k[m, :J]
        a2 = (spec.c[m] / k) ** 2 if envelope else np.abs(spec.a[m, :J]) ** 2
        w = (lam * k) ** 4 / (1.0 + (lam * k) ** 2) ** 2
        out[m] = float(np.sum(w * a2))
        negligible = spec.c[m] ** 2 < 1e-24 * max(spec.c[0] ** 2, 1e-300)
        if with_tail and spec.amp2 is not None and not negligible:
            if envelope:
                model = lambda kk, m=m: (spec.c[m] / kk) ** 2  # noqa: E731
            else:
                model = lambda kk, m=m: spec.amp2(m, kk)  # noqa: E731

            def g(t, m=m, model=model):
                kk = mcmahon(m, t)
                return (lam * kk) ** 4 / (1.0 + (lam * kk) ** 2) ** 2 * model(kk)

            out[m] += _tail(g, J, lam)
    return out * spec.order_weights


def disk_Dlambda(spec: DiskSpectrum, lam: float, rtol: float = 1e-8,
                 envelope: bool = False) -> dict:
    """``D_lam`` from the exact sum with ``mu = k^2``.

    The sum over the first ``J`` zeros is completed by a tail integral over
    the asymptotic zeros.  Convergence is checked by repeating the
    computation with ``J / 2`` zeros; the relative change, and the relative
    size of the last azimuthal order, must both stay below ``rtol``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    full = _dsum(spec, lam, spec.J, envelope, True)
    total = float(full.sum())
    out = {"lambda": lam, "D2": total, "D": float(np.sqrt(total))}
    if spec.amp2 is None:
        out.update(tail_change=0.0, order_tail=0.0)
        return out
    half = float(_dsum(spec, lam, spec.J // 2, envelope, True).sum())
    out["tail_change"] = abs(half - total) / total
    out["order_tail"] = float(full[-1] / total)
    if out["tail_change"] > rtol or out["order_tail"] > rtol:
        raise TailError(f"unconverged coefficient tail at lam={lam:g}: "
                        f"change {out['tail_change']:.2e}, last order {out['order_tail']:.2e}")
    return out


def disk_envelope(spec: DiskSpectrum, lam: float) -> float:
    """Upper envelope ``sqrt(sum lam^4 c_m^2 k^2 / (1 + lam^2 k^2)^2)``."""
    return float(np.sqrt(_dsum(spec, lam, spec.J, True, True).sum()))


def alpha_partial_sums(spec: DiskSpectrum, alpha: float, j_counts) -> np.ndarray:
    """Partial sums of ``k^{4 alpha} |a|^2`` over the first ``j`` zeros of every order."""
    terms = spec.k ** (4.0 * alpha) * np.abs(spec.a) ** 2 * spec.order_weights[:, None]
    cum = np.cumsum(terms.sum(axis=0))
    return np.array([cum[j - 1] for j in j_counts])


def disk_study(spec: DiskSpectrum | None = None, lambdas=None) -> dict:
    """``D_lam`` over a log-spaced sweep with the fitted ``log D^2`` slope."""
    spec = spec or disk_spectrum()
    lambdas = np.logspace(-3, -1, 9) if lambdas is None else np.asarray(lambdas, dtype=float)
    rows = [disk_Dlambda(spec, float(l)) for l in lambdas]
    for r in rows:
        r["envelope"] = disk_envelope(spec, r["lambda"])
    fit = fit_slope([(r["lambda"], r["D2"]) for r in rows])
    return {"rows": rows, "fit": fit}


# ---------------------------------------------------------------------------
# London sphere
# ---------------------------------------------------------------------------


def i1_scaled(z) -> np.ndarray:
    """``exp(-z) i1(z)`` for ``z >= 0``; ``i1(z) = (z cosh z - sinh z) / z^2``."""
    z = np.asarray(z, dtype=float)
    small = z < 2.0
    zs = np.where(small, z, 2.0)
    zl = np.where(small, 2.0, z)
    s = special.spherical_in(1, zs) * np.exp(-zs)
    e = np.exp(-2.0 * zl)
    big = ((zl - 1.0) + (zl + 1.0) * e) / (2.0 * zl * zl)
    return np.where(small, s, big)


def i0_scaled(z) -> np.ndarray:
    """``exp(-z) sinh(z) / z``."""
    z = np.asarray(z, dtype=float)
    small = z < 1e-8
    zz = np.where(small, 1.0, z)
    return np.where(small, np.exp(-z), -np.expm1(-2.0 * zz) / (2.0 * zz))


def _scaled_over_power(n: int, z) -> np.ndarray:
    """``exp(-z) i_n(z) / z^n`` for ``n`` in (1, 2), finite at ``z = 0``."""
    z = np.asarray(z, dtype=float)
    small = z < 2.0
    zs = np.where(small, np.maximum(z, 1e-300), 2.0)
    zl = np.where(small, 2.0, z)
    lead = 1.0 / 3.0 if n == 1 else 1.0 / 15.0
    tiny = zs < 1e-6
    s = np.where(tiny, lead * np.exp(-zs) * (1.0 + zs * zs / (2 * (2 * n + 3))),
                 special.spherical_in(n, zs) * np.exp(-zs) / np.where(tiny, 1.0, zs) ** n)
    if n == 1:
        big = i1_scaled(zl) / zl
    else:
        big = (i0_scaled(zl) - 3.0 * i1_scaled(zl) / zl) / zl ** 2
    return np.where(small, s, big)


def i1_log_derivative(z) -> np.ndarray:
    """``i1'(z) / i1(z) = i0 / i1 - 2 / z``."""
    z = np.asarray(z, dtype=float)
    return i0_scaled(z) / i1_scaled(z) - 2.0 / z


@dataclass(frozen=True)
class LondonSphere:
    """Exact field of a London ball in ``B0 e_z``.

    Parameters
    ----------
    R, lam, B0 : float
        Radius, penetration depth and applied amplitude.
    aR : float
        Vector-potential amplitude ``a(R)`` at the surface.
    moment : float
        Exterior dipole moment along ``e_z``.
    """

    R: float
    lam: float
    B0: float
    aR: float
    moment: float

    # -- radial profile -----------------------------------------------------

    def profile(self, r) -> tuple[np.ndarray, np.ndarray]:
        """``a(r)`` and ``a'(r)`` on both sides of the surface."""
        r = np.asarray(r, dtype=float)
        R, lam = self.R, self.lam
        inside = r <= R
        ri = np.where(inside, np.maximum(r, 1e-300), R)
        z, zR = ri / lam, R / lam
        ratio = np.exp(z - zR) * i1_scaled(z) / i1_scaled(zR)
        a_in = self.aR * ratio
        da_in = a_in * i1_log_derivative(z) / lam
        ro = np.where(inside, R, r)
        a_out = 0.5 * self.B0 * ro + self.moment / ro ** 2
        da_out = 0.5 * self.B0 - 2.0 * self.moment / ro ** 3
        return np.where(inside, a_in, a_out), np.where(inside, da_in, da_out)

    def _g(self, r) -> tuple[np.ndarray, np.ndarray]:
        """``g = a / r`` and ``q = g' / r``, regular at the centre.

        Inside, ``g = K i1(z) / (lam z)`` and ``q = K i2(z) / (lam^3 z^2)`` with
        ``z = r / lam`` and ``K`` the matched amplitude.
        """
        r = np.asarray(r, dtype=float)
        R, lam = self.R, self.lam
        inside = r <= R
        z = np.where(inside, r, R) / lam
        K = self.aR * np.exp(z - R / lam) / i1_scaled(R / lam)
        g_in = K * _scaled_over_power(1, z) / lam
        q_in = K * _scaled_over_power(2, z) / lam ** 3
        ro = np.where(inside, R, r)
        g_out = 0.5 * self.B0 + self.moment / ro ** 3
        q_out = -3.0 * self.moment / ro ** 5
        return np.where(inside, g_in, g_out), np.where(inside, q_in, q_out)

    # -- fields ---------------------------------------------------------------

    def field(self, x) -> np.ndarray:
        """Total field ``B = curl(g e_z x X) = (2 g + r^2 q) e_z - q z X``."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        g, q = self._g(r)
        B = -(q * x[..., 2])[..., None] * x
        B[..., 2] += 2.0 * g + r * r * q
        return B

    def vector_potential(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g, _ = self._g(np.linalg.norm(x, axis=-1))
        return g[..., None] * np.stack([-x[..., 1], x[..., 0], np.zeros(x.shape[:-1])], -1)

    def current(self, x) -> np.ndarray:
        """``j = curl B = -A / lam^2`` inside, zero outside."""
        x = np.asarray(x, dtype=float)
        inside = np.linalg.norm(x, axis=-1) <= self.R
        return np.where(inside[..., None], -self.vector_potential(x) / self.lam ** 2, 0.0)

    def continuity_residual(self) -> dict:
        """Jumps of ``a`` and ``a'`` at ``r = R`` relative to ``B0 R``."""
        R, lam = self.R, self.lam
        ain = self.aR
        dain = self.aR * float(i1_log_derivative(R / lam)) / lam
        aout = 0.5 * self.B0 * R + self.moment / R ** 2
        daout = 0.5 * self.B0 - 2.0 * self.moment / R ** 3
        s = abs(self.B0) * R
        # B.n ~ a / r, tangential B ~ a / r + a'
        return {"normal": abs(ain - aout) / s, "tangential": abs(dain - daout) * R / s}

    def normal_trace_norm(self) -> float:
        """``||B . n||_{L2}`` over the sphere: ``B_r = 2 a(R) cos(theta) / R``."""
        return abs(2.0 * self.aR / self.R) * np.sqrt(4.0 * np.pi * self.R ** 2 / 3.0)

    def exterior_tangential(self, points) -> np.ndarray:
        """Tangential field just outside the surface at surface points."""
        x = np.asarray(points, dtype=float)
        n = x / np.linalg.norm(x, axis=-1, keepdims=True)
        g = 0.5 * self.B0 + self.moment / self.R ** 3
        q = -3.0 * self.moment / self.R ** 5
        B = -(q * x[..., 2])[..., None] * x
        B[..., 2] += 2.0 * g + self.R ** 2 * q
        return B - np.einsum("...i,...i->...", B, n)[..., None] * n


def london_sphere(R: float, lam: float, B0: float) -> LondonSphere:
    """Match the interior ``i1`` profile to uniform field plus dipole."""
    if not (R > 0 and lam > 0 and B0 > 0):
        raise ValueError("R, lam and B0 must be positive")
    z = R / lam
    g = float(i1_log_derivative(z))
    denom = g / lam + 2.0 / R
    assert denom > 0.0, "matching system is singular"
    aR = 1.5 * B0 / denom
    moment = (aR - 0.5 * B0 * R) * R ** 2
    return LondonSphere(float(R), float(lam), float(B0), aR, moment)


def radial_bvp(R: float, lam: float, B0: float, n: int = 200):
    """Chebyshev collocation of the interior radial problem.

    Solves ``r^2 a'' + 2 r a' - (2 + r^2 / lam^2) a = 0`` on ``[0, R]`` with
    ``a(0) = 0`` and ``a'(R) + 2 a(R) / R = 3 B0 / 2``.  Returns a callable
    ``a(r)`` (barycentric interpolation of the collocation values).
    """
    t = np.cos(np.pi * np.arange(n + 1) / n)
    r = 0.5 * R * (1.0 - t)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dX = t[:, None] - t[None]
    Dt = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    Dt -= np.diag(Dt.sum(axis=1))
    D = -2.0 / R * Dt
    D2 = D @ D
    L = (r * r)[:, None] * D2 + (2.0 * r)[:, None] * D - np.diag(2.0 + (r / lam) ** 2)
    rhs = np.zeros(n + 1)
    # r[0] = 0, r[-1] = R
    L[0] = 0.0
    L[0, 0] = 1.0
    L[-1] = D[-1] + np.eye(n + 1)[-1] * 2.0 / R
    rhs[-1] = 1.5 * B0
    a = np.linalg.solve(L, rhs)
    w = (-1.0) ** np.arange(n + 1)
    w[0] *= 0.5
    w[-1] *= 0.5

    def interp(rq):
        rq = np.atleast_1d(np.asarray(rq, dtype=float))
        d = rq[:, None] - r[None]
        hit = np.isclose(d, 0.0, atol=1e-15 * R)
        d = np.where(hit, 1.0, d)
        q = w[None] / d
        val = (q @ a) / q.sum(axis=1)
        rows = hit.any(axis=1)
        val[rows] = a[hit[rows].argmax(axis=1)]
        return val

    return interp


def verify_against_bvp(R: float = 1.0, B0: float = 1.0, n_pairs: int = 10, seed: int = 0,
                       n: int = 240, lam_range=(1.0 / 64.0, 1.0)) -> float:
    """Largest relative gap between the closed form and the collocation solve.

    ``lam`` is drawn log-uniformly (in units of ``R``) and ``r`` uniformly
    in ``[R / 2, R]``, where the profile is not exponentially small.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        lam = R * float(np.exp(rng.uniform(np.log(lam_range[0]), np.log(lam_range[1]))))
        rq = R * float(rng.uniform(0.5, 1.0))
        exact, _ = london_sphere(R, lam, B0).profile(np.array([rq]))
        ref = radial_bvp(R, lam, B0, n)(rq)
        worst = max(worst, float(abs(exact[0] - ref[0]) / (abs(B0) * R)))
    return worst


def richardson(values, h, orders) -> float:
    """Eliminate error terms ``h^p`` for ``p`` in ``orders`` from ``values(h)``.

    ``h`` must be a geometric sequence with ratio 1/2.
    """
    T = [float(v) for v in values]
    for p in orders:
        f = 2.0 ** p
        T = [(f * T[i + 1] - T[i]) / (f - 1.0) for i in range(len(T) - 1)]
    if len(T) < 1:
        raise ValueError("not enough values for the requested orders")
    return T[-1]


def sphere_convergence_study(R: float = 1.0, B0: float = 1.0, lam_over_R=None,
                             n_grid: int = 32, r0: float | None = None,
                             richardson_points: int = 4) -> dict:
    """Compare exact finite-lambda traces with the limiting solution.

    Rows hold, per ``lam``, the normal-trace norm, the tangential trace
    difference and the collar difference to ``beta_lam``; ``fits`` holds
    the log-log slopes and ``dipole`` the extrapolated moment against the
    limiting solver's.
    """
    from .boundary_layer import build_beta
    from .geometry import build_collar, build_surface, sample_grid
    from .layer_potentials import assemble_operators
    from .limit_solver import IncomingField, UniformSource, sheet_current, solve_exterior_limit

    lam_over_R = np.asarray(lam_over_R if lam_over_R is not None
                            else 0.5 ** np.arange(1, 7), dtype=float)
    grid = sample_grid(build_surface("sphere", radius=R), n_grid, n_grid)
    ops = assemble_operators(grid)
    inc = IncomingField((UniformSource((0.0, 0.0, B0)),))
    sol = solve_exterior_limit(grid, inc, operators=ops)
    m_limit = float(sol.dipole_moment()[2])
    B = sol.total_trace()
    n = grid.normals
    Bt = B - np.einsum("ki,ki->k", B, n)[:, None] * n
    gamma0 = sheet_current(sol).vectors
    r0 = r0 if r0 is not None else 0.4 * R
    collar = build_collar(grid, r0, lam_min=R * lam_over_R.min(), reach=R)
    w = grid.weights
    rows = []
    import warnings
    for q in lam_over_R:
        lam = float(q * R)
        ls = london_sphere(R, lam, B0)
        tan = ls.exterior_tangential(grid.points)
        d_tan = float(np.sqrt(w @ ((tan - Bt) ** 2).sum(1)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            beta = build_beta(collar, gamma0, lam)
        b = beta.fields()["b"]
        exact = ls.field(collar.points)
        d_col = float(np.sqrt((collar.weights * ((exact - b) ** 2).sum(-1)).sum()))
        cont = ls.continuity_residual()
        rows.append({"lambda": lam, "normal_trace": ls.normal_trace_norm(),
                     "tangential_diff": d_tan, "collar_diff": d_col,
                     "moment": ls.moment, "continuity": max(cont.values())})
    fits = {key: fit_slope([(r["lambda"], r[key]) for r in rows])
            for key in ("normal_trace", "tangential_diff", "collar_diff")}
    k = richardson_points
    tail = rows[-k:]
    if any(not np.isclose(tail[i + 1]["lambda"], 0.5 * tail[i]["lambda"]) for i in range(k - 1)):
        raise ValueError("Richardson extrapolation needs a dyadic sweep")
    m_extrap = richardson([r["moment"] for r in tail], None, range(1, k))
    return {
        "rows": rows,
        "fits": fits,
        "dipole": {"extrapolated": m_extrap, "limit_solver": m_limit,
                   "shielding": -0.5 * B0 * R ** 3, "difference": abs(m_extrap - m_limit)},
        "limit_residuals": dict(sol.residuals),
    }
