"""Surface quadrature, smooth and weakly singular.

Smooth integrands use the grid weights directly (trapezoid in periodic
directions, Gauss-Legendre in the sphere's polar angle).  The layer potential
kernels

    S:  g(x, y)               = 1 / (4 pi |x - y|)
    D:  n(y) . grad_y g(x, y) = n(y) . (x - y) / (4 pi |x - y|^3)
    Sp: n(x) . grad_x g(x, y) = n(x) . (y - x) / (4 pi |x - y|^3)

are weakly singular on a smooth surface.  On doubly periodic charts the
singular part is handled with a floating partition of unity: a smooth window
``eta`` centred at the target is integrated in local polar coordinates (the
polar Jacobian cancels the 1/r singularity) with the density obtained by
trigonometric interpolation, and the complement ``1 - eta`` is integrated by
the plain rule on an upsampled copy of the grid.  On the sphere the whole surface is one polar patch
around the rotated pole, so ``eta == 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    TWO_PI,
    SurfaceGrid,
    gauss_nodes,
    lagrange_interp_matrix,
    periodic_interp_matrix,
    unit_normals,
)

KERNELS = ("S", "D", "Sp")
FOUR_PI = 4.0 * np.pi


def trapezoid_periodic(f_values, period: float = TWO_PI) -> float:
    f = np.asarray(f_values)
    return float(f.sum(axis=0) * period / f.shape[0])


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0):
    return gauss_nodes(n, a, b)


def smooth_surface_integral(grid: SurfaceGrid, integrand) -> float:
    """``sum_k w_k f(x_k)``; ``integrand`` is nodal data or a callable of points."""
    f = integrand(grid.points) if callable(integrand) else np.asarray(integrand)
    return float(np.tensordot(grid.weights, f, axes=(0, 0)))


def kernel_values(kinds, x0, n0, y, ny) -> np.ndarray:
    """Kernel values ``K(x0, y)`` for each kind; shape ``(len(kinds),) + y.shape[:-1]``."""
    d = y - x0
    r2 = np.sum(d * d, axis=-1)
    r = np.sqrt(r2)
    out = []
    for kind in kinds:
        if kind == "S":
            out.append(1.0 / (FOUR_PI * r))
        elif kind == "D":
            out.append(-np.sum(ny * d, axis=-1) / (FOUR_PI * r * r2))
        elif kind == "Sp":
            out.append(np.sum(n0 * d, axis=-1) / (FOUR_PI * r * r2))
        else:
            raise ValueError(f"unknown kernel {kind!r}")
    return np.array(out)


def pou_window(t, exponent: float = 2.0) -> np.ndarray:
    """Floating partition-of-unity window: 1 at 0, 0 for ``t >= 1``, C-infinity."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < 1.0
    ti = t[inside]
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        val = np.exp(exponent * np.exp(-1.0 / ti) / (ti - 1.0))
    val[ti <= 0.0] = 1.0
    out[inside] = val
    return out


@dataclass(frozen=True)
class SingularRule:
    """Auxiliary quadrature for the near field of one target node.

    ``params`` are the ``(u, v)`` parameter locations of the auxiliary nodes,
    ``weights`` already include the polar Jacobian, the surface element and
    the window.  ``far_weights`` multiply the kernel at the grid nodes.
    """

    target: int
    half_width: tuple[float, float]
    params: np.ndarray
    weights: np.ndarray
    far_weights: np.ndarray
    window_exponent: float


class PolarPatchRule:
    """Floating partition of unity with a local polar patch (periodic charts).

    Parameters
    ----------
    half_width : float or None
        Patch half-width in grid spacings per parameter direction, halved
        while it exceeds a quarter period.  ``None`` (default) fixes the
        half-width at ``patch_fraction`` of the period independently of the
        grid, which keeps the window resolved as the grid is refined.
    patch_fraction : float
        Half-width as a fraction of the period when ``half_width`` is None.
    n_radial, n_angular : int
        Gauss nodes in the polar radius and trapezoid nodes in the angle.
    upsample : int
        The windowed far part is integrated on a grid refined by this factor,
        with the density carried over by trigonometric interpolation.
    window_exponent : float
        Steepness constant of :func:`pou_window`.
    """

    def __init__(self, half_width: float | None = None, patch_fraction: float = 0.25,
                 n_radial: int = 32, n_angular: int = 96, upsample: int = 3,
                 window_exponent: float = 2.0):
        if upsample < 1:
            raise ValueError("upsample must be a positive integer")
        if not 0.0 < patch_fraction <= 0.25:
            raise ValueError("patch_fraction must lie in (0, 0.25]")
        self.half_width = half_width
        self.patch_fraction = patch_fraction
        self.n_radial = n_radial
        self.n_angular = n_angular
        self.upsample = int(upsample)
        self.window_exponent = window_exponent

    def _widths(self, grid: SurfaceGrid):
        if not grid.surface.periodic_u:
            raise ValueError("PolarPatchRule needs a doubly periodic chart")
        if self.half_width is None:
            a = self.patch_fraction * TWO_PI
            return (a, a)
        widths = []
        for n in (grid.nu, grid.nv):
            a = self.half_width * TWO_PI / n
            while a > 0.25 * TWO_PI:
                a *= 0.5
            widths.append(a)
        return tuple(widths)

    def template(self, grid: SurfaceGrid):
        au, av = self._widths(grid)
        t, wt = gauss_nodes(self.n_radial, 0.0, 1.0)
        phi = (np.arange(self.n_angular) + 0.5) * TWO_PI / self.n_angular
        T, P = np.meshgrid(t, phi, indexing="ij")
        du = (au * T * np.cos(P)).ravel()
        dv = (av * T * np.sin(P)).ravel()
        w = (wt[:, None] * (TWO_PI / self.n_angular) * au * av * T
             * pou_window(T, self.window_exponent)).ravel()
        return du, dv, w, (au, av)

    def fine_grid(self, grid: SurfaceGrid) -> SurfaceGrid:
        return grid if self.upsample == 1 else grid.refined(self.upsample)

    def far_window(self, grid: SurfaceGrid, i0: int, j0: int, fine=None) -> np.ndarray:
        """``1 - eta`` at the nodes of ``fine`` (default: ``grid``) for target ``(i0, j0)``."""
        fine = grid if fine is None else fine
        au, av = self._widths(grid)
        du = _wrap(fine.u - grid.u[i0])[:, None] / au
        dv = _wrap(fine.v - grid.v[j0])[None, :] / av
        t = np.sqrt(du * du + dv * dv)
        return (1.0 - pou_window(t, self.window_exponent)).ravel()

    def rule_for(self, grid: SurfaceGrid, target: int) -> SingularRule:
        i0, j0 = divmod(target, grid.nv)
        du, dv, w, widths = self.template(grid)
        u = grid.u[i0] + du
        v = grid.v[j0] + dv
        jet = grid.surface.evaluate(u, v)
        J = np.linalg.norm(np.cross(jet.Xu, jet.Xv), axis=-1)
        fine = self.fine_grid(grid)
        far = fine.weights * self.far_window(grid, i0, j0, fine)
        return SingularRule(target, widths, np.stack([u, v], -1), w * J, far,
                            self.window_exponent)

    def assemble(self, grid: SurfaceGrid, kinds=KERNELS) -> dict[str, np.ndarray]:
        nu, nv, N = grid.nu, grid.nv, grid.n
        du, dv, w, _ = self.template(grid)
        fine = self.fine_grid(grid)
        f = self.upsample
        # interpolation factors relative to node (0, 0); rows shift by roll
        Lu0 = periodic_interp_matrix(grid.u[0] + du, nu)
        Lv0 = periodic_interp_matrix(grid.v[0] + dv, nv)
        Luf, Lvf = grid.resample_matrix(fine)
        mats = {k: np.empty((N, N)) for k in kinds}
        nk = len(kinds)
        symmetric = _is_rotational(grid.surface)
        for i0 in range(nu):
            win = self.far_window(grid, i0, 0, fine).reshape(fine.nu, fine.nv)
            for j0 in range(1 if symmetric else nv):
                k0 = i0 * nv + j0
                jet = grid.surface.evaluate(grid.u[i0] + du, grid.v[j0] + dv)
                Nrm = np.cross(jet.Xu, jet.Xv)
                J = np.linalg.norm(Nrm, axis=-1)
                ny = grid.surface.normal_sign * Nrm / J[:, None]
                x0, n0 = grid.points[k0], grid.normals[k0]
                c = kernel_values(kinds, x0, n0, jet.X, ny) * (w * J)[None, :]
                stacked = (c[:, :, None] * Lv0[None, :, :]).transpose(1, 0, 2).reshape(len(w), nk * nv)
                near = (Lu0.T @ stacked).reshape(nu, nk, nv)
                farw = (np.roll(win, f * j0, axis=1).ravel() * fine.weights)
                kf = np.zeros((nk, fine.n))
                m = farw != 0.0
                kf[:, m] = kernel_values(kinds, x0, n0, fine.points[m], fine.normals[m]) * farw[m]
                for a, kind in enumerate(kinds):
                    far = Luf.T @ kf[a].reshape(fine.nu, fine.nv) @ Lvf
                    row = np.roll(near[:, a, :], (i0, j0), axis=(0, 1)) + far
                    if symmetric:
                        blk = mats[kind][k0:k0 + nv].reshape(nv, nu, nv)
                        for jj in range(nv):
                            blk[jj] = np.roll(row, jj, axis=1)
                    else:
                        mats[kind][k0] = row.ravel()
        return mats


def _is_rotational(surface) -> bool:
    """True when the chart commutes with rotations about the z axis by ``v``."""
    return surface.kind != "sphere" and all(j == 0 for _, j, _ in surface.coeffs)


class RotatedSphereRule:
    """Polar rule about the rotated pole for the latitude-longitude sphere.

    For each target the sphere is re-parametrised by spherical coordinates
    whose pole is the target; ``sin(theta')`` cancels the kernel
    singularity.  The density is interpolated with barycentric Lagrange
    interpolation in the polar angle and trigonometric interpolation in the
    azimuth.  Rows for targets on one latitude differ by a cyclic shift.
    """

    def __init__(self, n_theta: int | None = None, n_phi: int | None = None):
        self.n_theta = n_theta
        self.n_phi = n_phi

    def _sizes(self, grid):
        return (self.n_theta or grid.nu, self.n_phi or 2 * grid.nv)

    def _aux(self, grid: SurfaceGrid, i0: int, phi0: float):
        nt, nphi = self._sizes(grid)
        R = grid.surface.params["radius"]
        tp, wtp = gauss_nodes(nt, 0.0, np.pi)
        pp = np.arange(nphi) * TWO_PI / nphi
        T, P = np.meshgrid(tp, pp, indexing="ij")
        local = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
        th0 = grid.u[i0] + grid.surface.offset[0]
        ph0 = phi0 + grid.surface.offset[1]
        Ry = np.array([[np.cos(th0), 0, np.sin(th0)], [0, 1, 0], [-np.sin(th0), 0, np.cos(th0)]])
        Rz = np.array([[np.cos(ph0), -np.sin(ph0), 0], [np.sin(ph0), np.cos(ph0), 0], [0, 0, 1]])
        y = local @ (Rz @ Ry).T
        theta = np.arccos(np.clip(y[:, 2], -1.0, 1.0))
        phi = np.arctan2(y[:, 1], y[:, 0])
        w = (wtp[:, None] * np.sin(T) * (TWO_PI / nphi)).ravel() * R * R
        sign = grid.surface.orientation
        return R * y, sign * y, theta - grid.surface.offset[0], phi - grid.surface.offset[1], w

    def rule_for(self, grid: SurfaceGrid, target: int) -> SingularRule:
        i0, j0 = divmod(target, grid.nv)
        _, _, th, ph, w = self._aux(grid, i0, grid.v[j0])
        return SingularRule(target, (np.pi, np.pi), np.stack([th, ph], -1), w,
                            np.zeros(grid.n), 0.0)

    def assemble(self, grid: SurfaceGrid, kinds=KERNELS) -> dict[str, np.ndarray]:
        if grid.surface.kind != "sphere":
            raise ValueError("RotatedSphereRule is specific to the sphere chart")
        nu, nv, N = grid.nu, grid.nv, grid.n
        nk = len(kinds)
        mats = {k: np.empty((N, N)) for k in kinds}
        for i0 in range(nu):
            y, ny, th, ph, w = self._aux(grid, i0, grid.v[0])
            Lu = lagrange_interp_matrix(th, grid.u)
            Lv = periodic_interp_matrix(ph - grid.v[0], nv)
            k0 = i0 * nv
            c = kernel_values(kinds, grid.points[k0], grid.normals[k0], y, ny) * w[None, :]
            stacked = (c[:, :, None] * Lv[None]).transpose(1, 0, 2).reshape(len(w), nk * nv)
            row0 = (Lu.T @ stacked).reshape(nu, nk, nv)
            for j0 in range(nv):
                for a, kind in enumerate(kinds):
                    mats[kind][k0 + j0] = np.roll(row0[:, a, :], j0, axis=1).ravel()
        return mats


def default_rule(grid: SurfaceGrid, **options):
    if grid.surface.kind == "sphere":
        return RotatedSphereRule(**options)
    return PolarPatchRule(**options)


def singular_apply(grid: SurfaceGrid, kernel: str, density, target: int, rule=None) -> float:
    """Apply one on-surface layer operator to ``density`` at one grid node."""
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    rule = rule or default_rule(grid)
    if isinstance(rule, PolarPatchRule):
        au, av = rule._widths(grid)
        if au > 0.5 * np.pi + 1e-12 or av > 0.5 * np.pi + 1e-12:
            raise ValueError("patch width exceeds a quarter period")
    sr = rule.rule_for(grid, target)
    x0, n0 = grid.points[target], grid.normals[target]
    jet = grid.surface.evaluate(sr.params[:, 0], sr.params[:, 1])
    ny = unit_normals(grid.surface, jet)
    sigma_aux = grid.interpolate(density, sr.params[:, 0], sr.params[:, 1])
    near = float(np.sum(kernel_values([kernel], x0, n0, jet.X, ny)[0] * sr.weights * sigma_aux))
    fine_density = np.asarray(density, dtype=float)
    fine_points, fine_normals = grid.points, grid.normals
    if isinstance(rule, PolarPatchRule) and rule.upsample > 1:
        fine = rule.fine_grid(grid)
        fine_density = grid.resample(density, fine)
        fine_points, fine_normals = fine.points, fine.normals
    mask = sr.far_weights != 0.0
    kf = kernel_values([kernel], x0, n0, fine_points[mask], fine_normals[mask])[0]
    far = float(np.sum(kf * sr.far_weights[mask] * fine_density[mask]))
    return near + far


def _wrap(d):
    return np.mod(d + np.pi, TWO_PI) - np.pi
