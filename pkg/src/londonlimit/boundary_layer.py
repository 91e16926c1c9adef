"""Explicit boundary-layer 2-form on the collar of a boundary.

In collar coordinates ``(u, v, rho)`` with ``Phi = X(u, v) + rho n(u, v)``
(``rho < 0`` inside) the form is

    beta = f(rho) d rho ^ gamma + E(rho) d gamma,
    f = exp(rho / lam) psi(rho),   E' = f,   E(-2 r0) = 0,

where ``gamma = gamma_u du + gamma_v dv`` is the pullback of the boundary
sheet current.  Components: ``beta_{rho u} = f gamma_u``,
``beta_{rho v} = f gamma_v``, ``beta_{uv} = E c`` with
``c = d_u gamma_v - d_v gamma_u``.

Vector proxies: a 2-form ``beta`` is ``i_b dV``, i.e.

    b = (beta_{v rho} Phi_u + beta_{rho u} Phi_v + beta_{uv} Phi_rho) / det J

with the signed Jacobian.  The current ``d* beta`` is represented by
``j = curl b`` and the operator ``dd* + lam^-2`` by ``curl j + b / lam^2``.
Radial derivatives are propagated exactly as truncated Taylor jets; tangential
derivatives are spectral on the surface grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .geometry import (
    CollarGrid,
    NearestPointError,
    SurfaceGrid,
    grid_chart_jet,
    nearest_point,
    normal_derivatives,
)


class TraceIdentityError(RuntimeError):
    """The boundary trace of the constructed form misses the prescribed data."""


class ResolutionError(RuntimeError):
    """The radial quadrature does not resolve the exponential profile."""


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffProfile:
    """Even C2 cutoff: 1 on ``|r| <= r0``, quintic smoothstep down to 0 at ``2 r0``."""

    r0: float

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")

    def derivatives(self, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``psi``, ``psi'`` and ``psi''`` at ``r``."""
        r = np.asarray(r, dtype=float)
        a = np.abs(r)
        s = np.clip((2.0 * self.r0 - a) / self.r0, 0.0, 1.0)
        ramp = (a > self.r0) & (a < 2.0 * self.r0)
        p0 = s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)
        p1 = 30.0 * s * s * (1.0 - s) ** 2
        p2 = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
        ds = -np.sign(r) / self.r0
        d1 = np.where(ramp, p1 * ds, 0.0)
        d2 = np.where(ramp, p2 / self.r0 ** 2, 0.0)
        return p0, d1, d2

    def __call__(self, r) -> np.ndarray:
        return self.derivatives(r)[0]


def profile_jet(rho, lam: float, cutoff: CutoffProfile):
    """``f``, ``f'``, ``f''`` of ``f = exp(rho / lam) psi(rho)``."""
    p0, p1, p2 = cutoff.derivatives(rho)
    e = np.exp(np.asarray(rho, dtype=float) / lam)
    return e * p0, e * (p0 / lam + p1), e * (p0 / lam ** 2 + 2.0 * p1 / lam + p2)


def E_profile(r, lam: float, cutoff: CutoffProfile) -> np.ndarray | float:
    """``E(r) = int_{-inf}^r exp(s / lam) psi(s) ds`` by adaptive quadrature."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    order = np.argsort(r_arr)
    out = np.zeros_like(r_arr)
    lo, acc = -2.0 * cutoff.r0, 0.0
    for k in order:
        hi = min(r_arr[k], 2.0 * cutoff.r0)
        if hi > lo:
            # scale by exp(hi / lam) so the integrand stays O(1)
            brk = [p for p in (-cutoff.r0, 0.0, cutoff.r0) if lo < p < hi]
            val, _ = quad(lambda s: np.exp((s - hi) / lam) * cutoff(s), lo, hi,
                          points=brk or None, epsabs=0.0, epsrel=1e-13, limit=200)
            acc = acc * np.exp((lo - hi) / lam) + val if lo > -2.0 * cutoff.r0 else val
            lo = hi
            out[k] = acc * np.exp(hi / lam)
        else:
            out[k] = acc * np.exp(lo / lam) if lo > -2.0 * cutoff.r0 else 0.0
    return out if np.ndim(r) else float(out[0])


# ---------------------------------------------------------------------------
# Taylor jets in rho: tuples (value, d/drho, d2/drho2)
# ---------------------------------------------------------------------------


def _jmul(a, b):
    """Product of a scalar jet ``a`` (shape (L, N)) and a jet ``b``."""
    ex = (lambda x: x[..., None]) if b[0].ndim > a[0].ndim else (lambda x: x)
    a0, a1, a2 = (ex(x) for x in a)
    return (a0 * b[0], a1 * b[0] + a0 * b[1], a2 * b[0] + 2.0 * a1 * b[1] + a0 * b[2])


def _jdot(a, b):
    d = lambda x, y: np.einsum("...i,...i->...", x, y)  # noqa: E731
    return (d(a[0], b[0]), d(a[1], b[0]) + d(a[0], b[1]),
            d(a[2], b[0]) + 2.0 * d(a[1], b[1]) + d(a[0], b[2]))


def _jdiv(x, d):
    ex = (lambda y: y[..., None]) if x[0].ndim > d[0].ndim else (lambda y: y)
    d0, d1, d2 = (ex(y) for y in d)
    q0 = x[0] / d0
    q1 = (x[1] - q0 * d1) / d0
    q2 = (x[2] - 2.0 * q1 * d1 - q0 * d2) / d0
    return q0, q1, q2


def _jadd(*jets):
    return tuple(sum(parts) for parts in zip(*jets))


# ---------------------------------------------------------------------------
# The form
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BetaField:
    collar: CollarGrid
    lam: float
    cutoff: CutoffProfile
    gamma0: np.ndarray
    gamma_u: np.ndarray
    gamma_v: np.ndarray
    curl_gamma: np.ndarray
    trace_error: float = 0.0
    _surface: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> SurfaceGrid:
        return self.collar.grid

    def E(self, rho) -> np.ndarray:
        return E_profile(np.asarray(rho, dtype=float), self.lam, self.cutoff)

    # -- field evaluation on (u, v) grid levels ----------------------------

    def _geometry_jets(self, rho):
        s = self._surface
        r = np.asarray(rho, dtype=float)[:, None, None]
        z = np.zeros((len(r),) + s["xu"].shape)
        phi_u = (s["xu"][None] + r * s["nu"][None], s["nu"][None] + z, z)
        phi_v = (s["xv"][None] + r * s["nv"][None], s["nv"][None] + z, z)
        nrm = (s["n"][None] + z, z, z)
        cr = (np.cross(phi_u[0], phi_v[0]),
              np.cross(phi_u[1], phi_v[0]) + np.cross(phi_u[0], phi_v[1]),
              2.0 * np.cross(phi_u[1], phi_v[1]))
        det = _jdot(cr, nrm)
        return phi_u, phi_v, nrm, det

    def _b_jets(self, rho):
        rho = np.asarray(rho, dtype=float)
        L, N = len(rho), self.grid.n
        f = tuple(np.broadcast_to(x[:, None], (L, N)) for x in profile_jet(rho, self.lam, self.cutoff))
        E0 = self.E(rho)
        Ej = (np.broadcast_to(E0[:, None], (L, N)), f[0], f[1])
        phi_u, phi_v, nrm, det = self._geometry_jets(rho)
        gu, gv, c = self.gamma_u[None, :], self.gamma_v[None, :], self.curl_gamma[None, :]
        t1 = _jmul((-f[0] * gv, -f[1] * gv, -f[2] * gv), phi_u)
        t2 = _jmul((f[0] * gu, f[1] * gu, f[2] * gu), phi_v)
        t3 = _jmul((Ej[0] * c, Ej[1] * c, Ej[2] * c), nrm)
        b = _jdiv(_jadd(t1, t2, t3), det)
        return b, (phi_u, phi_v, nrm), det

    def _du(self, a):
        return np.moveaxis(self.grid.diff_u(np.moveaxis(a, 1, 0)), 0, 1)

    def _dv(self, a):
        return np.moveaxis(self.grid.diff_v(np.moveaxis(a, 1, 0)), 0, 1)

    def fields(self, rho=None) -> dict[str, np.ndarray]:
        """``b``, ``j = curl b`` and the residual ``curl j + b / lam^2``.

        Arrays have shape ``(len(rho), n_surface_nodes, 3)``; the default levels
        are the collar's radial nodes.
        """
        rho = self.collar.rho if rho is None else np.atleast_1d(np.asarray(rho, dtype=float))
        b, frame, det = self._b_jets(rho)
        phi_u, phi_v, nrm = frame
        bu, bv, br = (_jdot(b, p) for p in frame)
        # j^i = eps^{ijk} d_j b_k / det, kept as first-order jets
        du, dv = self._du, self._dv
        ju_num = (dv(br[0]) - bv[1], dv(br[1]) - bv[2])
        jv_num = (bu[1] - du(br[0]), bu[2] - du(br[1]))
        jr_num = (du(bv[0]) - dv(bu[0]), du(bv[1]) - dv(bu[1]))

        def div1(x):
            q0 = x[0] / det[0]
            return q0, (x[1] - q0 * det[1]) / det[0]

        ju, jv, jr = div1(ju_num), div1(jv_num), div1(jr_num)
        j0 = ju[0][..., None] * phi_u[0] + jv[0][..., None] * phi_v[0] + jr[0][..., None] * nrm[0]
        j1 = (ju[1][..., None] * phi_u[0] + ju[0][..., None] * phi_u[1]
              + jv[1][..., None] * phi_v[0] + jv[0][..., None] * phi_v[1]
              + jr[1][..., None] * nrm[0])
        dot = lambda x, y: np.einsum("...i,...i->...", x, y)  # noqa: E731
        cu = (dot(j0, phi_u[0]), dot(j1, phi_u[0]) + dot(j0, phi_u[1]))
        cv = (dot(j0, phi_v[0]), dot(j1, phi_v[0]) + dot(j0, phi_v[1]))
        cr = (dot(j0, nrm[0]), dot(j1, nrm[0]))
        ku = (dv(cr[0]) - cv[1]) / det[0]
        kv = (cu[1] - du(cr[0])) / det[0]
        kr = (du(cv[0]) - dv(cu[0])) / det[0]
        curl_j = ku[..., None] * phi_u[0] + kv[..., None] * phi_v[0] + kr[..., None] * nrm[0]
        return {
            "rho": rho,
            "b": b[0],
            "j": j0,
            "residual": curl_j + b[0] / self.lam ** 2,
            "det": det[0],
        }

    def closedness_residual(self, rho=None) -> float:
        """Relative size of the discrete ``d beta`` on the collar levels."""
        rho = self.collar.rho if rho is None else np.atleast_1d(rho)
        f = profile_jet(rho, self.lam, self.cutoff)[0][:, None]
        gu, gv, c = self.gamma_u[None], self.gamma_v[None], self.curl_gamma[None]
        # d_u beta_{v rho} + d_v beta_{rho u} + d_rho beta_{uv}
        d = self._du(-f * gv) + self._dv(f * gu) + f * c
        scale = np.abs(f) * (np.abs(self._du(gv)) + np.abs(self._dv(gu)))
        return float(np.abs(d).max() / max(scale.max(), 1e-300))

    def surface_trace(self) -> np.ndarray:
        """Vector proxy ``b`` at ``rho = 0`` (shape ``(N, 3)``)."""
        return self.fields(np.array([0.0]))["b"][0]


def build_beta(collar: CollarGrid, gamma0, lam: float, cutoff: CutoffProfile | None = None,
               B_tangential=None, trace_tol: float = 1e-6) -> BetaField:
    """Assemble the boundary-layer form for the sheet current ``gamma0``.

    ``B_tangential`` (the total tangential boundary field) enables the trace
    check: the tangential part of ``b`` at ``rho = 0`` must reproduce it.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    cutoff = cutoff or CutoffProfile(collar.r0)
    if lam > cutoff.r0:
        warnings.warn(f"lam={lam:g} exceeds r0={cutoff.r0:g}; the layer is not thin", stacklevel=2)
    grid = collar.grid
    g0 = np.asarray(getattr(gamma0, "vectors", gamma0), dtype=float)
    if g0.shape != (grid.n, 3):
        raise ValueError("gamma0 must be an (N, 3) array of tangent vectors")
    jet = grid_chart_jet(grid)
    n, n_u, n_v = normal_derivatives(grid.surface, jet)
    if np.abs(np.einsum("ki,ki->k", g0, n)).max() > 1e-8 * max(1.0, np.abs(g0).max()):
        raise ValueError("gamma0 is not tangential")
    gu = np.einsum("ki,ki->k", g0, jet.Xu)
    gv = np.einsum("ki,ki->k", g0, jet.Xv)
    c = grid.diff_u(gv) - grid.diff_v(gu)
    surf = {"xu": jet.Xu, "xv": jet.Xv, "n": n, "nu": n_u, "nv": n_v}
    beta = BetaField(collar, float(lam), cutoff, g0, gu, gv, c, 0.0, surf)
    err = 0.0
    if B_tangential is not None:
        Bt = np.asarray(B_tangential, dtype=float)
        bt = beta.surface_trace()
        bt = bt - np.einsum("ki,ki->k", bt, n)[:, None] * n
        w = grid.weights
        ref = np.sqrt(w @ (Bt * Bt).sum(1))
        err = float(np.sqrt(w @ ((bt - Bt) ** 2).sum(1)) / ref) if ref > 0 else float(np.abs(bt).max())
        if err > trace_tol:
            raise TraceIdentityError(f"tangential trace mismatch {err:.3e}")
    object.__setattr__(beta, "trace_error", err)
    return beta


# ---------------------------------------------------------------------------
# Norms, currents, pairing
# ---------------------------------------------------------------------------


def _radial_resolution(collar: CollarGrid, lam: float) -> float:
    """Relative error of the radial rule on ``int exp(2 rho / lam)``."""
    exact = 0.5 * lam * -np.expm1(-4.0 * collar.r0 / lam)
    approx = float(collar.w_rho @ np.exp(2.0 * collar.rho / lam))
    return abs(approx - exact) / exact


def collar_norms(beta: BetaField, tol: float = 1e-2) -> dict[str, float]:
    """``L2``, ``L1`` and ``residual_L2`` of the form over the collar."""
    res = _radial_resolution(beta.collar, beta.lam)
    if res > tol:
        raise ResolutionError(f"radial rule error {res:.2e} at lam={beta.lam:g}; refine the collar panels")
    F = beta.fields()
    w = beta.collar.weights
    b2 = (F["b"] ** 2).sum(-1)
    r2 = (F["residual"] ** 2).sum(-1)
    return {
        "L2": float(np.sqrt((w * b2).sum())),
        "L1": float((w * np.sqrt(b2)).sum()),
        "residual_L2": float(np.sqrt((w * r2).sum())),
        "radial_rule_error": res,
    }


def through_thickness(beta: BetaField) -> np.ndarray:
    """``int j d rho`` along each normal segment of the collar (shape ``(N, 3)``)."""
    F = beta.fields()
    return np.tensordot(beta.collar.w_rho, F["j"], axes=(0, 0))


def sheet_error(beta: BetaField) -> float:
    """Relative L2(dS) distance between ``int j d rho`` and ``-gamma0``."""
    w = beta.grid.weights
    d = through_thickness(beta) + beta.gamma0
    ref = np.sqrt(w @ (beta.gamma0 ** 2).sum(1))
    return float(np.sqrt(w @ (d * d).sum(1)) / ref) if ref > 0 else float(np.abs(d).max())


@dataclass(frozen=True)
class CurrentSample:
    values: np.ndarray
    inside: np.ndarray


def eval_current(beta: BetaField, points) -> CurrentSample:
    """``j`` at arbitrary points; points off the collar give zero and ``inside=False``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = beta.grid
    out = np.zeros(pts.shape)
    inside = np.zeros(len(pts), dtype=bool)
    feet = []
    for k, p in enumerate(pts):
        try:
            u, v, rho = nearest_point(grid.surface, p, grid)
        except NearestPointError:
            continue
        if -2.0 * beta.cutoff.r0 <= rho <= 0.0:
            inside[k] = True
            feet.append((k, u, v, rho))
    for k, u, v, rho in feet:
        J = beta.fields(np.array([rho]))["j"][0]
        out[k] = grid.interpolate(J, np.array([u]), np.array([v]))[0]
    return CurrentSample(out, inside)


def pair_with_testform(beta: BetaField, P) -> dict[str, float]:
    """Both sides of ``int_Omega j . P dV = int_dOmega (b x P) . n dS + O(lam)``.

    ``P`` is the vector proxy of the test 2-form, a callable on points.
    The boundary side uses the trace of ``b``; ``sheet_limit`` is its
    ``lam -> 0`` value ``-int gamma0 . P dS``.
    """
    col = beta.collar
    F = beta.fields()
    Pv = np.asarray(P(col.points), dtype=float)
    lhs = float((col.weights * np.einsum("lki,lki->lk", F["j"], Pv)).sum())
    g = beta.grid
    bt = beta.surface_trace()
    Ps = np.asarray(P(g.points), dtype=float)
    rhs = float(g.weights @ np.einsum("ki,ki->k", np.cross(bt, Ps), g.normals))
    limit = float(-(g.weights @ np.einsum("ki,ki->k", beta.gamma0, Ps)))
    return {"volume": lhs, "boundary": rhs, "difference": lhs - rhs, "sheet_limit": limit}


def tangential(B: np.ndarray, grid: SurfaceGrid) -> np.ndarray:
    n = grid.normals
    return B - np.einsum("ki,ki->k", B, n)[:, None] * n

