"""Parametrized closed surfaces, Nyström grids, collars and homology cycles.

Charts are maps ``(u, v) -> R^3``.  Tori (of revolution and twisted) share one
Fourier-type chart

    X(u, v) = sum_{i,j} delta_{i,j} [cos v cos t, sin v cos t, sin t],
    t = (1 - i) u + j v,

so ``u`` is the poloidal angle and ``v`` the toroidal one.  A torus of
revolution with radii ``(R, r)`` is the table ``{(1, 0): R, (0, 0): r}``.  The
sphere uses a latitude-longitude chart with ``u`` the polar angle on
Gauss-Legendre nodes (no pole nodes) and ``v`` the azimuth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

TWO_PI = 2.0 * np.pi

#: Coefficient table of the twisted-torus test geometry.
TWISTED_TORUS_COEFFS: dict[tuple[int, int], float] = {
    (-1, 1): 0.17,
    (-1, 0): 0.11,
    (0, 0): 1.0,
    (1, 0): 4.5,
    (2, 0): -0.25,
    (0, 1): 0.07,
    (2, 1): -0.45,
}

SURFACE_KINDS = ("sphere", "torus_rev", "twisted_torus")


class GeometryError(ValueError):
    """Invalid geometry parameters or a failed geometric check."""


class ChartJet(NamedTuple):
    X: np.ndarray
    Xu: np.ndarray
    Xv: np.ndarray
    Xuu: np.ndarray
    Xuv: np.ndarray
    Xvv: np.ndarray


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSurface:
    """Closed surface given by an analytic chart.

    ``chart_sign`` is +1 when ``Xu x Xv`` points outward and -1 otherwise; it
    is determined once from the enclosed-volume sign.  ``orientation`` flips
    the normal field (used for the inner boundary of a shell, whose outward
    normal relative to the shell points into the hole).
    """

    kind: str
    params: dict = field(compare=False)
    coeffs: tuple[tuple[int, int, float], ...] = ()
    chart_sign: int = 1
    orientation: int = 1
    offset: tuple[float, float] = (0.0, 0.0)

    @property
    def periodic_u(self) -> bool:
        return self.kind != "sphere"

    @property
    def normal_sign(self) -> int:
        return self.chart_sign * self.orientation

    def flipped(self) -> "ParamSurface":
        return ParamSurface(self.kind, self.params, self.coeffs, self.chart_sign,
                            -self.orientation, self.offset)

    def shifted(self, du: float, dv: float) -> "ParamSurface":
        """Same surface with the parameter origin moved by ``(du, dv)``."""
        if self.kind == "sphere" and du != 0.0:
            raise GeometryError("the polar angle of the sphere chart cannot be shifted")
        off = (self.offset[0] + du, self.offset[1] + dv)
        return ParamSurface(self.kind, self.params, self.coeffs, self.chart_sign,
                            self.orientation, off)

    def evaluate(self, u, v) -> ChartJet:
        u = np.asarray(u, dtype=float) + self.offset[0]
        v = np.asarray(v, dtype=float) + self.offset[1]
        if self.kind == "sphere":
            return _sphere_jet(self.params["radius"], u, v)
        return _fourier_torus_jet(self.coeffs, u, v)

    def __call__(self, u, v) -> np.ndarray:
        return self.evaluate(u, v).X


def _sphere_jet(R: float, u, v) -> ChartJet:
    su, cu, sv, cv = np.sin(u), np.cos(u), np.sin(v), np.cos(v)
    zero = np.zeros_like(su * sv)
    X = R * np.stack([su * cv, su * sv, cu + zero], axis=-1)
    Xu = R * np.stack([cu * cv, cu * sv, -su + zero], axis=-1)
    Xv = R * np.stack([-su * sv, su * cv, zero], axis=-1)
    Xuu = -X + 0.0
    Xuv = R * np.stack([-cu * sv, cu * cv, zero], axis=-1)
    Xvv = R * np.stack([-su * cv, -su * sv, zero], axis=-1)
    return ChartJet(X, Xu, Xv, Xuu, Xuv, Xvv)


def _fourier_torus_jet(coeffs, u, v) -> ChartJet:
    # rho(u, v) and z(u, v) in the meridian plane, then rotate by v.
    shape = np.broadcast(u, v).shape
    rho = [np.zeros(shape) for _ in range(6)]  # f, f_u, f_v, f_uu, f_uv, f_vv
    z = [np.zeros(shape) for _ in range(6)]
    for i, j, d in coeffs:
        a, b = 1 - i, j
        t = a * u + b * v
        c, s = np.cos(t), np.sin(t)
        rho[0] += d * c
        rho[1] += -d * a * s
        rho[2] += -d * b * s
        rho[3] += -d * a * a * c
        rho[4] += -d * a * b * c
        rho[5] += -d * b * b * c
        z[0] += d * s
        z[1] += d * a * c
        z[2] += d * b * c
        z[3] += -d * a * a * s
        z[4] += -d * a * b * s
        z[5] += -d * b * b * s
    cv, sv = np.cos(v) + np.zeros(shape), np.sin(v) + np.zeros(shape)
    f, fu, fv, fuu, fuv, fvv = rho
    X = np.stack([cv * f, sv * f, z[0]], axis=-1)
    Xu = np.stack([cv * fu, sv * fu, z[1]], axis=-1)
    Xv = np.stack([cv * fv - sv * f, sv * fv + cv * f, z[2]], axis=-1)
    Xuu = np.stack([cv * fuu, sv * fuu, z[3]], axis=-1)
    Xuv = np.stack([cv * fuv - sv * fu, sv * fuv + cv * fu, z[4]], axis=-1)
    Xvv = np.stack([cv * fvv - 2 * sv * fv - cv * f,
                    sv * fvv + 2 * cv * fv - sv * f, z[5]], axis=-1)
    return ChartJet(X, Xu, Xv, Xuu, Xuv, Xvv)


def build_surface(kind: str, **params) -> ParamSurface:
    """Build a sphere, torus of revolution or twisted torus.

    ``sphere(radius=1)``, ``torus_rev(R, r)``, ``twisted_torus(coeffs=None)``;
    the twisted torus defaults to :data:`TWISTED_TORUS_COEFFS`.
    """
    if kind == "sphere":
        R = float(params.pop("radius", 1.0))
        _no_extra(kind, params)
        if R <= 0:
            raise GeometryError("sphere radius must be positive")
        return ParamSurface("sphere", {"radius": R})
    if kind == "torus_rev":
        try:
            R, r = float(params.pop("R")), float(params.pop("r"))
        except KeyError as exc:
            raise GeometryError(f"torus_rev needs parameter {exc}") from None
        _no_extra(kind, params)
        if r <= 0 or R <= r:
            raise GeometryError(f"degenerate torus radii R={R}, r={r}")
        table = {(1, 0): R, (0, 0): r}
        surf = ParamSurface("torus_rev", {"R": R, "r": r}, _coeff_tuple(table))
    elif kind == "twisted_torus":
        table = params.pop("coeffs", None)
        _no_extra(kind, params)
        table = dict(TWISTED_TORUS_COEFFS if table is None else table)
        table = {tuple(int(x) for x in k): float(d) for k, d in table.items()}
        surf = ParamSurface("twisted_torus", {"coeffs": table}, _coeff_tuple(table))
    else:
        raise GeometryError(f"unknown surface kind {kind!r}")
    sign = _chart_orientation(surf)
    return ParamSurface(surf.kind, surf.params, surf.coeffs, sign)


def _no_extra(kind, params):
    if params:
        raise GeometryError(f"unexpected parameters for {kind}: {sorted(params)}")


def _coeff_tuple(table):
    return tuple((i, j, d) for (i, j), d in sorted(table.items()) if d != 0.0)


def _chart_orientation(surf: ParamSurface, n: int = 48) -> int:
    t = np.arange(n) * TWO_PI / n
    U, V = np.meshgrid(t, t, indexing="ij")
    jet = surf.evaluate(U, V)
    vol = np.sum(np.einsum("...i,...i", jet.X, np.cross(jet.Xu, jet.Xv))) / 3.0
    if abs(vol) < 1e-12:
        raise GeometryError("chart encloses no volume")
    return 1 if vol > 0 else -1


# ---------------------------------------------------------------------------
# 1D rules on parameter axes
# ---------------------------------------------------------------------------


def periodic_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.arange(n) * TWO_PI / n, np.full(n, TWO_PI / n)


def gauss_nodes(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def periodic_interp_matrix(xq, n: int) -> np.ndarray:
    """Rows of the trigonometric interpolant on ``n`` (even) uniform nodes."""
    xq = np.asarray(xq, dtype=float)
    d = xq[:, None] - (np.arange(n) * TWO_PI / n)[None, :]
    d = np.mod(d + np.pi, TWO_PI) - np.pi
    half = 0.5 * d
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.sin(n * half) / (n * np.tan(half))
    L[np.abs(d) < 1e-14] = 1.0
    return L


def periodic_diff_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    d = (k[:, None] - k[None, :]) * TWO_PI / n
    with np.errstate(divide="ignore"):
        D = 0.5 * (-1.0) ** (k[:, None] - k[None, :]) / np.tan(0.5 * d)
    D[k, k] = 0.0
    return D


def _bary_weights(x: np.ndarray) -> np.ndarray:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    # scaled to avoid overflow; barycentric formula is scale invariant
    w = 1.0 / np.prod(diff * (4.0 / (x.max() - x.min() + 1e-300)), axis=1)
    return w / np.abs(w).max()


def lagrange_interp_matrix(xq, x: np.ndarray) -> np.ndarray:
    """Barycentric Lagrange interpolation rows from nodes ``x`` to ``xq``."""
    xq = np.asarray(xq, dtype=float)
    w = _bary_weights(x)
    d = xq[:, None] - x[None, :]
    exact = np.abs(d) < 1e-15
    d[exact] = 1.0
    t = w[None, :] / d
    L = t / t.sum(axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    if np.any(rows):
        L[rows] = exact[rows].astype(float)
    return L


def lagrange_diff_matrix(x: np.ndarray) -> np.ndarray:
    w = _bary_weights(x)
    n = len(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    D[np.arange(n), np.arange(n)] = -D.sum(axis=1)
    return D


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    """Tensor-product Nyström grid on a :class:`ParamSurface`.

    Nodal arrays are flattened in C order over ``(u, v)``: node ``k`` sits at
    ``(u[k // nv], v[k % nv])``.
    """

    surface: ParamSurface
    nu: int
    nv: int
    u: np.ndarray
    v: np.ndarray
    wu: np.ndarray
    wv: np.ndarray
    points: np.ndarray
    xu: np.ndarray
    xv: np.ndarray
    normals: np.ndarray
    metric: np.ndarray
    sqrtg: np.ndarray
    weights: np.ndarray
    mean_curvature: np.ndarray
    principal_curvatures: np.ndarray

    @property
    def n(self) -> int:
        return self.nu * self.nv

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def spacing(self) -> float:
        """Largest physical node spacing, a scale for near-surface accuracy."""
        hu = np.sqrt(self.metric[:, 0, 0]) * self.wu.max()
        hv = np.sqrt(self.metric[:, 1, 1]) * self.wv.max()
        return float(max(hu.max(), hv.max()))

    def param_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        U, V = np.meshgrid(self.u, self.v, indexing="ij")
        return U.ravel(), V.ravel()

    def flipped(self) -> "SurfaceGrid":
        return sample_grid(self.surface.flipped(), self.nu, self.nv)

    # -- spectral calculus on nodal data ------------------------------------

    def _reshape(self, f):
        f = np.asarray(f)
        return f.reshape((self.nu, self.nv) + f.shape[1:])

    def diff_u(self, f) -> np.ndarray:
        F = self._reshape(f)
        D = self._du_matrix()
        return np.tensordot(D, F, axes=(1, 0)).reshape(np.shape(f))

    def diff_v(self, f) -> np.ndarray:
        F = self._reshape(f)
        D = _cached_periodic_diff(self.nv)
        out = np.tensordot(D, np.moveaxis(F, 1, 0), axes=(1, 0))
        return np.moveaxis(out, 0, 1).reshape(np.shape(f))

    def _du_matrix(self):
        if self.surface.periodic_u:
            return _cached_periodic_diff(self.nu)
        return lagrange_diff_matrix(self.u)

    def interp_factors(self, uq, vq) -> tuple[np.ndarray, np.ndarray]:
        """``(Lu, Lv)`` with ``f(uq_p, vq_p) = sum_ij Lu[p,i] Lv[p,j] F[i,j]``."""
        if self.surface.periodic_u:
            Lu = periodic_interp_matrix(uq, self.nu)
        else:
            Lu = lagrange_interp_matrix(uq, self.u)
        return Lu, periodic_interp_matrix(vq, self.nv)

    def interpolate(self, f, uq, vq) -> np.ndarray:
        Lu, Lv = self.interp_factors(uq, vq)
        F = self._reshape(f)
        if F.ndim == 2:
            return np.einsum("pi,ij,pj->p", Lu, F, Lv)
        return np.einsum("pi,ij...,pj->p...", Lu, F, Lv)

    def surface_gradient(self, phi) -> np.ndarray:
        """Tangential gradient of nodal scalar data, as 3-vectors."""
        pu, pv = self.diff_u(phi), self.diff_v(phi)
        ginv = np.linalg.inv(self.metric)
        cu = ginv[:, 0, 0] * pu + ginv[:, 0, 1] * pv
        cv = ginv[:, 1, 0] * pu + ginv[:, 1, 1] * pv
        return cu[:, None] * self.xu + cv[:, None] * self.xv

    def refined(self, factor: int) -> "SurfaceGrid":
        return sample_grid(self.surface, self.nu * factor, self.nv * factor)

    def resample_matrix(self, other: "SurfaceGrid") -> tuple[np.ndarray, np.ndarray]:
        """Interpolation factors from this grid's nodes to ``other``'s nodes."""
        if self.surface.periodic_u:
            Lu = periodic_interp_matrix(other.u, self.nu)
        else:
            Lu = lagrange_interp_matrix(other.u, self.u)
        return Lu, periodic_interp_matrix(other.v, self.nv)

    def resample(self, f, other: "SurfaceGrid") -> np.ndarray:
        Lu, Lv = self.resample_matrix(other)
        F = self._reshape(f)
        out = np.tensordot(Lu, F, axes=(1, 0))
        out = np.moveaxis(np.tensordot(Lv, np.moveaxis(out, 1, 0), axes=(1, 0)), 0, 1)
        return out.reshape((other.n,) + np.shape(f)[1:])


_DIFF_CACHE: dict[int, np.ndarray] = {}


def _cached_periodic_diff(n):
    if n not in _DIFF_CACHE:
        _DIFF_CACHE[n] = periodic_diff_matrix(n)
    return _DIFF_CACHE[n]


def unit_normals(surface: ParamSurface, jet: ChartJet) -> np.ndarray:
    N = np.cross(jet.Xu, jet.Xv)
    return surface.normal_sign * N / np.linalg.norm(N, axis=-1, keepdims=True)


def normal_derivatives(surface: ParamSurface, jet: ChartJet):
    """Unit normal and its parameter derivatives ``(n, n_u, n_v)``."""
    N = np.cross(jet.Xu, jet.Xv)
    Nu = np.cross(jet.Xuu, jet.Xv) + np.cross(jet.Xu, jet.Xuv)
    Nv = np.cross(jet.Xuv, jet.Xv) + np.cross(jet.Xu, jet.Xvv)
    m = np.linalg.norm(N, axis=-1, keepdims=True)
    s = surface.normal_sign
    n = N / m

    def dn(Nd):
        return s * (Nd - n * np.sum(n * Nd, axis=-1, keepdims=True)) / m

    return s * n, dn(Nu), dn(Nv)


def sample_grid(surface: ParamSurface, nu: int, nv: int) -> SurfaceGrid:
    """Sample a surface on an ``nu x nv`` tensor grid (both even, >= 8)."""
    for n in (nu, nv):
        if n < 8 or n % 2:
            raise GeometryError(f"grid sizes must be even and >= 8, got {nu}x{nv}")
    if surface.periodic_u:
        u, wu = periodic_nodes(nu)
    else:
        u, wu = gauss_nodes(nu, 0.0, np.pi)
    v, wv = periodic_nodes(nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    jet = surface.evaluate(U.ravel(), V.ravel())
    N = np.cross(jet.Xu, jet.Xv)
    sqrtg = np.linalg.norm(N, axis=-1)
    if np.min(sqrtg) < 1e-12 * np.max(sqrtg):
        raise GeometryError("rank-deficient chart Jacobian at a grid node")
    n = surface.normal_sign * N / sqrtg[:, None]
    E = np.sum(jet.Xu * jet.Xu, -1)
    F = np.sum(jet.Xu * jet.Xv, -1)
    G = np.sum(jet.Xv * jet.Xv, -1)
    metric = np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2)
    # second fundamental form with the outward normal; convex => positive curvature
    e = -np.sum(n * jet.Xuu, -1)
    f = -np.sum(n * jet.Xuv, -1)
    g = -np.sum(n * jet.Xvv, -1)
    II = np.stack([np.stack([e, f], -1), np.stack([f, g], -1)], -2)
    shape_op = np.linalg.solve(metric, II)
    kappa = np.sort(np.real(np.linalg.eigvals(shape_op)), axis=-1)
    weights = sqrtg * np.outer(wu, wv).ravel()
    return SurfaceGrid(surface, nu, nv, u, v, wu, wv, jet.X, jet.Xu, jet.Xv, n,
                       metric, sqrtg, weights, kappa.mean(axis=-1), kappa)


# ---------------------------------------------------------------------------
# Nearest point map, reach
# ---------------------------------------------------------------------------


class NearestPointError(RuntimeError):
    pass


def nearest_point(surface: ParamSurface, x, grid: SurfaceGrid | None = None,
                  tol: float = 1e-13, max_iter: int = 50, n_starts: int = 4):
    """Foot point parameters and signed distance (negative inside) of ``x``.

    Newton iteration on the squared distance, started from the closest grid
    nodes; the best converged start wins.
    """
    x = np.asarray(x, dtype=float)
    if grid is None:
        grid = sample_grid(surface, 32, 32)
    d2 = np.sum((grid.points - x) ** 2, axis=1)
    U, V = grid.param_nodes()
    best = None
    for k in np.argsort(d2)[:n_starts]:
        p = np.array([U[k], V[k]])
        converged = False
        for _ in range(max_iter):
            jet = surface.evaluate(p[0], p[1])
            r = jet.X - x
            gvec = np.array([r @ jet.Xu, r @ jet.Xv])
            H = np.array([[jet.Xu @ jet.Xu + r @ jet.Xuu, jet.Xu @ jet.Xv + r @ jet.Xuv],
                          [jet.Xu @ jet.Xv + r @ jet.Xuv, jet.Xv @ jet.Xv + r @ jet.Xvv]])
            try:
                step = np.linalg.solve(H, gvec)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)):
                break
            lim = 0.5
            if np.max(np.abs(step)) > lim:
                step *= lim / np.max(np.abs(step))
            p = p - step
            if np.max(np.abs(step)) < tol:
                converged = True
                break
        if not converged:
            continue
        jet = surface.evaluate(p[0], p[1])
        dist = np.linalg.norm(x - jet.X)
        if best is None or dist < best[2] - 1e-12:
            best = (p[0], p[1], dist, jet)
    if best is None:
        raise NearestPointError(f"Newton failed to converge for point {x}")
    u, v, dist, jet = best
    n = unit_normals(surface, jet)
    sign = 1.0 if (x - jet.X) @ n >= 0 else -1.0
    if surface.kind == "sphere":
        u = float(u)
        v = float(np.mod(v, TWO_PI))
    else:
        u, v = float(np.mod(u, TWO_PI)), float(np.mod(v, TWO_PI))
    return u, v, sign * float(dist)


def estimate_reach(grid: SurfaceGrid, others: tuple[SurfaceGrid, ...] = (),
                   chunk: int = 512) -> float:
    """Conservative lower bound for the one-sided (inner) reach.

    Minimum of the curvature bound ``1 / max|kappa|`` and an inscribed-ball
    scan: for node ``k`` the largest inner ball touching ``x_k`` that contains
    no other node (of this grid or ``others``) has radius
    ``min_l |d|^2 / (-2 d.n_k)`` over ``d = x_l - x_k`` with ``d.n_k < 0``.
    The ball scan catches bottlenecks such as a nearby second boundary.
    """
    kmax = np.max(np.abs(grid.principal_curvatures))
    curv = 1.0 / kmax if kmax > 0 else np.inf
    pts = np.vstack([grid.points] + [o.points for o in others])
    r_ball = np.inf
    for s in range(0, grid.n, chunk):
        x = grid.points[s:s + chunk]
        n = grid.normals[s:s + chunk]
        d = pts[None, :, :] - x[:, None, :]
        dn = np.einsum("klj,kj->kl", d, n)
        d2 = np.sum(d * d, axis=-1)
        mask = dn < -1e-14 * np.sqrt(d2 + 1e-300)
        with np.errstate(divide="ignore"):
            r = np.where(mask, d2 / np.where(mask, -2.0 * dn, 1.0), np.inf)
        r_ball = min(r_ball, float(r.min()))
    # the ball scan over-estimates at grid resolution; curvature guards it
    return float(min(curv, r_ball))


# ---------------------------------------------------------------------------
# Collar
# ---------------------------------------------------------------------------


def collar_panels(r0: float, lam_min: float | None = None, order: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss nodes on ``[-2 r0, 0]``, refined geometrically toward 0.

    Breakpoints sit at ``-2 r0``, ``-r0`` (end of the cutoff transition) and
    ``-r0 / 2**k`` so each panel sees a smooth integrand.
    """
    if lam_min is None:
        lam_min = r0 / 16.0
    levels = max(1, int(np.ceil(np.log2(r0 / lam_min))) + 2)
    edges = [-2.0 * r0, -1.5 * r0, -r0] + [-r0 / 2.0 ** k for k in range(1, levels + 1)] + [0.0]
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_nodes(order, a, b)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True, eq=False)
class CollarGrid:
    """Tensor grid in ``(u, v, rho)`` over ``{-2 r0 <= rho <= 0}``.

    Arrays are shaped ``(n_rho, n_surface_nodes, ...)``.  ``jac_det`` is the
    signed determinant of ``[Phi_u, Phi_v, Phi_rho]``.
    """

    grid: SurfaceGrid
    r0: float
    rho: np.ndarray
    w_rho: np.ndarray
    points: np.ndarray
    phi_u: np.ndarray
    phi_v: np.ndarray
    normals: np.ndarray
    n_u: np.ndarray
    n_v: np.ndarray
    jac_det: np.ndarray
    weights: np.ndarray

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    @property
    def n_rho(self) -> int:
        return len(self.rho)


def build_collar(grid: SurfaceGrid, r0: float, n_rho: int | None = None,
                 lam_min: float | None = None, order: int = 12,
                 reach: float | None = None) -> CollarGrid:
    """Collar grid of depth ``2 r0`` on the inner side of ``grid``.

    ``n_rho`` (if given) only acts as a lower bound on the node count.
    """
    if reach is None:
        reach = estimate_reach(grid)
    if not 2.0 * r0 < reach:
        raise GeometryError(f"collar depth 2*r0={2 * r0:g} exceeds reach estimate {reach:g}")
    rho, w_rho = collar_panels(r0, lam_min, order)
    while n_rho is not None and len(rho) < n_rho:
        order += 2
        rho, w_rho = collar_panels(r0, lam_min, order)
    U, V = grid.param_nodes()
    jet = grid.surface.evaluate(U, V)
    n, nu_, nv_ = normal_derivatives(grid.surface, jet)
    r = rho[:, None, None]
    phi_u = jet.Xu[None] + r * nu_[None]
    phi_v = jet.Xv[None] + r * nv_[None]
    points = jet.X[None] + r * n[None]
    det = np.einsum("mki,mki->mk", np.cross(phi_u, phi_v), np.broadcast_to(n, phi_u.shape))
    s = np.sign(det[-1, 0])
    if np.any(det * s < 1e-3 * np.abs(det[-1]).min()):
        raise GeometryError("collar map is not injective (Jacobian sign change)")
    pw = np.outer(grid.wu, grid.wv).ravel()
    weights = np.abs(det) * pw[None, :] * w_rho[:, None]
    return CollarGrid(grid, r0, rho, w_rho, points, phi_u, phi_v, n, nu_, nv_, det, weights)


# ---------------------------------------------------------------------------
# Cycles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CyclePath:
    """Closed curve ``c(t)``, ``t`` in ``[0, 2 pi)``, with derivative."""

    curve: Callable[[np.ndarray], np.ndarray]
    dcurve: Callable[[np.ndarray], np.ndarray]
    label: str = "A"
    component: int = 0

    def sample(self, n_t: int):
        t = np.arange(n_t) * TWO_PI / n_t
        return self.curve(t), self.dcurve(t)


def poloidal_cycle(surface: ParamSurface, v0: float = 0.0, offset: float = 0.3,
                   label: str = "A", component: int = 0) -> CyclePath:
    """Parameter circle ``u -> X(u, v0) + offset * n`` (poloidal loop)."""
    return _offset_cycle(surface, lambda t: (t, np.full_like(t, v0)), (1.0, 0.0),
                         offset, label, component)


def toroidal_cycle(surface: ParamSurface, u0: float = 0.0, offset: float = 0.3,
                   label: str = "B", component: int = 0) -> CyclePath:
    """Parameter circle ``v -> X(u0, v) + offset * n`` (toroidal loop)."""
    return _offset_cycle(surface, lambda t: (np.full_like(t, u0), t), (0.0, 1.0),
                         offset, label, component)


def _offset_cycle(surface, par, dpar, offset, label, component):
    def curve(t):
        u, v = par(np.asarray(t, dtype=float))
        jet = surface.evaluate(u, v)
        return jet.X + offset * unit_normals(surface, jet)

    def dcurve(t):
        u, v = par(np.asarray(t, dtype=float))
        jet = surface.evaluate(u, v)
        n, n_u, n_v = normal_derivatives(surface, jet)
        a, b = dpar
        return a * (jet.Xu + offset * n_u) + b * (jet.Xv + offset * n_v)

    return CyclePath(curve, dcurve, label, component)


def centerline(surface: ParamSurface, n_avg: int = 64) -> CyclePath:
    """The poloidal average ``v -> mean_u X(u, v)`` of a torus chart."""
    if not surface.periodic_u:
        raise GeometryError("centerline needs a doubly periodic chart")
    us = np.arange(n_avg) * TWO_PI / n_avg

    def curve(t):
        t = np.asarray(t, dtype=float)
        jet = surface.evaluate(us[:, None], t[None, :])
        return jet.X.mean(axis=0)

    def dcurve(t):
        t = np.asarray(t, dtype=float)
        jet = surface.evaluate(us[:, None], t[None, :])
        return jet.Xv.mean(axis=0)

    return CyclePath(curve, dcurve, "core", 0)


def cycle_integral(field_evaluator: Callable[[np.ndarray], np.ndarray],
                   cycle: CyclePath, n_t: int = 256) -> float:
    """Circulation of a vector field along a cycle (periodic trapezoid rule)."""
    c, dc = cycle.sample(n_t)
    B = np.asarray(field_evaluator(c))
    if not np.all(np.isfinite(B)):
        raise FloatingPointError("field evaluation failed along the cycle")
    return float(np.sum(np.einsum("ti,ti->t", B, dc)) * TWO_PI / n_t)


def grid_chart_jet(grid: SurfaceGrid) -> ChartJet:
    U, V = grid.param_nodes()
    return grid.surface.evaluate(U, V)
