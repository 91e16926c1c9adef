"""Limiting (perfectly shielding) magnetostatic problems.

The scattered field is represented as

    B = grad S[sigma] + sum_k c_k h_k

with ``h_k`` explicit harmonic fields carrying the prescribed cycle
circulations: the Biot-Savart field of a loop threading the body for an
exterior problem, or the axis field ``(-y, x, 0) / (2 pi (x^2 + y^2))`` inside
a solid torus.  Gradients have no circulation, so the circulations are fixed
by ``c_k`` alone and ``sigma`` solves a plain Neumann problem.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import (
    CyclePath,
    SurfaceGrid,
    centerline,
    cycle_integral,
    NearestPointError,
    nearest_point,
    poloidal_cycle,
    toroidal_cycle,
)
from .layer_potentials import (
    LayerOperators,
    LoopSource,
    assemble_operators,
    biot_savart,
    eval_gradS,
)
from .quadrature import FOUR_PI, kernel_values

TWO_PI = 2.0 * np.pi


class SolverError(RuntimeError):
    """A solve or one of its built-in verifications failed."""


class CompatibilityError(SolverError):
    """Inner incoming field has non-zero net flux through the inner boundary."""


class RegionError(ValueError):
    """Evaluation point or source on the wrong side of a boundary."""


# ---------------------------------------------------------------------------
# Incoming fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformSource:
    amplitude: tuple[float, float, float]

    def field(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.amplitude, dtype=float), x.shape).copy()

    def anchor_points(self) -> np.ndarray:
        return np.empty((0, 3))


@dataclass(frozen=True)
class DipoleSource:
    """Point dipole, ``B = (3 (m.r^) r^ - m) / r^3``."""

    location: tuple[float, float, float]
    moment: tuple[float, float, float]

    def field(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.location, dtype=float)
        m = np.asarray(self.moment, dtype=float)
        r2 = np.sum(d * d, axis=-1, keepdims=True)
        r = np.sqrt(r2)
        return (3.0 * np.sum(m * d, axis=-1, keepdims=True) * d / r2 - m) / (r2 * r)

    def anchor_points(self) -> np.ndarray:
        return np.asarray(self.location, dtype=float)[None, :]


@dataclass(frozen=True)
class LoopFieldSource:
    loop: LoopSource

    def field(self, x):
        return biot_savart(self.loop, x)

    def anchor_points(self) -> np.ndarray:
        return self.loop.nodes()[0]


@dataclass(frozen=True)
class MonopoleSource:
    """Unphysical point charge of magnetic flux ``charge``; used to exercise
    the compatibility check."""

    location: tuple[float, float, float]
    charge: float = 1.0

    def field(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.location, dtype=float)
        r2 = np.sum(d * d, axis=-1, keepdims=True)
        return self.charge * d / (FOUR_PI * r2 * np.sqrt(r2))

    def anchor_points(self) -> np.ndarray:
        return np.asarray(self.location, dtype=float)[None, :]


@dataclass(frozen=True)
class IncomingField:
    """Superposition of elementary sources.

    ``region`` is ``"outer"`` for fields incident on the outer boundary and
    ``"inner"`` for fields inside the hole of a shell.
    """

    sources: tuple = ()
    region: str = "outer"

    def __post_init__(self):
        if self.region not in ("outer", "inner"):
            raise ValueError(f"unknown region {self.region!r}")
        object.__setattr__(self, "sources", tuple(self.sources))

    def field(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for s in self.sources:
            out += s.field(x)
        return out

    __call__ = field

    @property
    def is_zero(self) -> bool:
        return len(self.sources) == 0

    def check_placement(self, grid: SurfaceGrid, margin: float = 1e-3, n_check: int = 64):
        """Sources must keep ``margin`` from the boundary; outer sources stay outside
        the body and inner sources inside the cavity bounded by ``grid``."""
        for s in self.sources:
            pts = s.anchor_points()
            if len(pts) == 0:
                continue
            pts = pts[:: max(1, len(pts) // n_check)]
            d2 = ((pts[:, None, :] - grid.points[None, :, :]) ** 2).sum(-1)
            near = np.sqrt(d2.min(axis=1))
            for p, dn in zip(pts, near):
                inside = _solid_angle(grid, p[None, :])[0] < -0.5
                if dn < 2.0 * grid.spacing:
                    try:
                        rho = nearest_point(grid.surface, p, grid)[2]
                    except NearestPointError:
                        rho = np.nan
                    if abs(rho) < margin:
                        raise RegionError(f"source point {p} touches the boundary")
                    if np.isfinite(rho):
                        inside = rho < 0
                if self.region == "outer" and inside:
                    raise RegionError(f"outer source point {p} lies inside the body")
                if self.region == "inner" and not inside:
                    raise RegionError(f"inner source point {p} lies outside the cavity")


ZERO_FIELD = IncomingField()


def _solid_angle(grid: SurfaceGrid, x) -> np.ndarray:
    """Double layer of the constant 1: -1 inside, 0 outside (smooth rule)."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    out = np.empty(len(x))
    step = max(1, 400_000 // grid.n)
    for a in range(0, len(x), step):
        blk = x[a:a + step, None, :]
        k = kernel_values(["D"], blk, None, grid.points[None], grid.normals[None])[0]
        out[a:a + step] = k @ grid.weights
    return out


# ---------------------------------------------------------------------------
# Flux data and harmonic basis fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FluxSpec:
    """Prescribed circulations; ``a`` on A-cycles, ``b`` on B-cycles."""

    a: tuple[float, ...] = ()
    b: tuple[float, ...] = ()
    a_cycles: tuple[CyclePath, ...] = ()
    b_cycles: tuple[CyclePath, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))


def genus(grid: SurfaceGrid) -> int:
    return 0 if grid.surface.kind == "sphere" else 1


@dataclass(frozen=True, eq=False)
class HarmonicField:
    """Curl- and divergence-free field normalized to unit circulation on ``cycle``."""

    evaluator: object
    cycle: CyclePath
    normalization: float
    label: str

    def __call__(self, x) -> np.ndarray:
        return self.evaluator(np.asarray(x, dtype=float)) / self.normalization


def axis_field(x) -> np.ndarray:
    """``(-y, x, 0) / (2 pi (x^2 + y^2))``: unit circulation about the z axis."""
    x = np.asarray(x, dtype=float)
    rho2 = x[..., 0] ** 2 + x[..., 1] ** 2
    out = np.zeros(x.shape)
    out[..., 0] = -x[..., 1] / (TWO_PI * rho2)
    out[..., 1] = x[..., 0] / (TWO_PI * rho2)
    return out


def threading_loop_field(grid: SurfaceGrid, a_cycle: CyclePath, loop: LoopSource | None = None,
                         n_t: int = 512, link_tol: float = 1e-3) -> HarmonicField:
    """Biot-Savart field of a unit loop inside the body, normalized on ``a_cycle``.

    The loop defaults to the poloidal average of the chart.  A circulation
    different from +-1 means the loop does not link the cycle once.
    """
    if loop is None:
        loop = LoopSource.from_cycle(centerline(grid.surface), n_quad=n_t)
    c = cycle_integral(lambda x: biot_savart(loop, x), a_cycle, n_t)
    if abs(abs(c) - 1.0) > link_tol:
        raise SolverError(f"threading loop circulation {c:.6g}: loop does not link the A-cycle once")
    return HarmonicField(lambda x: biot_savart(loop, x), a_cycle, c, "loop")


def interior_axis_field(b_cycle: CyclePath, n_t: int = 512, link_tol: float = 1e-3) -> HarmonicField:
    c = cycle_integral(axis_field, b_cycle, n_t)
    if abs(abs(c) - 1.0) > link_tol:
        raise SolverError(f"axis field circulation {c:.6g}: B-cycle does not wind once about the axis")
    return HarmonicField(axis_field, b_cycle, c, "axis")


def default_cycles(grid: SurfaceGrid, side: str, offset: float | None = None):
    """A- and B-cycles off a torus: outside (``side='ext'``) or inside."""
    if genus(grid) == 0:
        return (), ()
    if offset is None:
        # 30% of the mean |Xu|, which is the minor radius on a torus of revolution
        offset = 0.3 * float(np.mean(np.sqrt(grid.metric[:, 0, 0])))
    s = 1.0 if side == "ext" else -1.0
    return ((poloidal_cycle(grid.surface, 0.0, s * offset, "A", 0),),
            (toroidal_cycle(grid.surface, 0.0, s * offset, "B", 0),))


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LimitSolution:
    grid: SurfaceGrid
    sigma: np.ndarray
    coefficients: tuple[float, ...]
    basis: tuple[HarmonicField, ...]
    region: str
    incoming: IncomingField
    operators: LayerOperators = field(repr=False)
    residuals: dict = field(default_factory=dict)
    circulations: dict = field(default_factory=dict)

    def basis_field(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for c, h in zip(self.coefficients, self.basis):
            if c != 0.0:
                out += c * h(x)
        return out

    def trace(self) -> np.ndarray:
        """Scattered field on the boundary, limit from the solution's side."""
        g = self.grid
        tang = g.surface_gradient(self.operators.S @ self.sigma)
        side = -0.5 if self.region == "exterior" else 0.5
        normal = side * self.sigma + self.operators.Sp @ self.sigma
        return tang + normal[:, None] * g.normals + self.basis_field(g.points)

    def total_trace(self) -> np.ndarray:
        return self.trace() + self.incoming.field(self.grid.points)

    def dipole_moment(self) -> np.ndarray:
        """Far-field moment ``m`` of the scattered field, ``B ~ (3 (m.x) x / r^2 - m) / r^3``.

        Only defined for an exterior solution without harmonic basis fields;
        the potential ``S[sigma]`` decays like ``-m . x / r^3``.
        """
        if self.region != "exterior" or any(c != 0.0 for c in self.coefficients):
            raise ValueError("dipole moment needs an exterior solution with zero circulations")
        g = self.grid
        return -(g.weights * self.sigma) @ g.points / (4.0 * np.pi)


def _neumann_rhs(grid, incoming, basis, coeffs):
    g = -np.einsum("ki,ki->k", incoming.field(grid.points), grid.normals)
    for c, h in zip(coeffs, basis):
        g -= c * np.einsum("ki,ki->k", h(grid.points), grid.normals)
    return g


def _circulations(sol: LimitSolution, cycles, n_t=512) -> list[float]:
    return [cycle_integral(lambda x: eval_field(sol, x, check_region=False), c, n_t) for c in cycles]


def _apply_bc_residual(sol: LimitSolution) -> float:
    bn = np.einsum("ki,ki->k", sol.total_trace(), sol.grid.normals)
    ref = np.abs(sol.incoming.field(sol.grid.points)).max() if not sol.incoming.is_zero else 0.0
    ref = max(ref, max((abs(c) for c in sol.coefficients), default=0.0), 1e-300)
    return float(np.abs(bn).max() / ref) if ref > 1e-300 else float(np.abs(bn).max())


def solve_exterior_limit(grid: SurfaceGrid, incoming: IncomingField = ZERO_FIELD,
                         flux: FluxSpec | None = None, operators: LayerOperators | None = None,
                         loop: LoopSource | None = None, tol: float = 1e-6,
                         check_sources: bool = True) -> LimitSolution:
    """Outgoing field with zero total normal component and prescribed A-circulations."""
    flux = flux or FluxSpec()
    gen = genus(grid)
    if len(flux.a) != gen:
        raise ValueError(f"surface has genus {gen}; got {len(flux.a)} a-circulations")
    if check_sources:
        incoming.check_placement(grid)
    ops = operators if operators is not None else assemble_operators(grid)
    a_cyc, b_cyc = default_cycles(grid, "ext")
    a_cyc = flux.a_cycles or a_cyc
    b_cyc = flux.b_cycles or b_cyc
    basis = tuple(threading_loop_field(grid, c, loop) for c in a_cyc) if gen else ()
    rhs = _neumann_rhs(grid, incoming, basis, flux.a)
    A = ops.Sp - 0.5 * np.eye(grid.n)
    try:
        sigma = scipy.linalg.solve(A, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"exterior Neumann solve failed: {exc}") from exc
    res = float(np.linalg.norm(A @ sigma - rhs) / max(np.linalg.norm(rhs), 1e-300))
    sol = LimitSolution(grid, sigma, flux.a, basis, "exterior", incoming, ops,
                        {"linear": res})
    _verify(sol, a_cyc, flux.a, b_cyc, tol)
    return sol


def check_compatibility(grid_inner: SurfaceGrid, incoming: IncomingField) -> float:
    """Net flux ``int B_in . n dS`` through the inner boundary."""
    bn = np.einsum("ki,ki->k", incoming.field(grid_inner.points), grid_inner.normals)
    return float(grid_inner.weights @ bn)


def solve_interior_limit(grid_inner: SurfaceGrid, incoming: IncomingField = ZERO_FIELD,
                         flux_b: FluxSpec | None = None, operators: LayerOperators | None = None,
                         tol: float = 1e-6, check_sources: bool = True) -> LimitSolution:
    """Field inside the inner boundary with prescribed B-circulation."""
    flux_b = flux_b or FluxSpec()
    gen = genus(grid_inner)
    if len(flux_b.b) != gen:
        raise ValueError(f"surface has genus {gen}; got {len(flux_b.b)} b-circulations")
    if check_sources:
        incoming.check_placement(grid_inner)
    compat = check_compatibility(grid_inner, incoming)
    if abs(compat) > tol * grid_inner.area:
        raise CompatibilityError(f"net incoming flux {compat:.3e} through the inner boundary")
    ops = operators if operators is not None else assemble_operators(grid_inner)
    a_cyc, b_cyc = default_cycles(grid_inner, "int")
    a_cyc = flux_b.a_cycles or a_cyc
    b_cyc = flux_b.b_cycles or b_cyc
    basis = tuple(interior_axis_field(c) for c in b_cyc) if gen else ()
    w = grid_inner.weights
    rhs = _neumann_rhs(grid_inner, incoming, basis, flux_b.b)
    rhs_mean = float(w @ rhs / grid_inner.area)
    rhs = rhs - rhs_mean
    A = ops.Sp + 0.5 * np.eye(grid_inner.n) + np.outer(np.ones(grid_inner.n), w) / grid_inner.area
    try:
        sigma = scipy.linalg.solve(A, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"interior Neumann solve failed: {exc}") from exc
    res = float(np.linalg.norm(A @ sigma - rhs) / max(np.linalg.norm(rhs), 1e-300))
    deflation = float(abs(w @ sigma) / grid_inner.area)
    scale = max(float(np.abs(sigma).max()), 1e-300)
    if deflation > 1e-8 * scale and deflation > 1e-14:
        raise SolverError(f"deflated component {deflation:.3e} does not vanish")
    sol = LimitSolution(grid_inner, sigma, flux_b.b, basis, "interior", incoming, ops,
                        {"linear": res, "deflation": deflation, "rhs_mean": rhs_mean,
                         "compatibility": compat})
    # the A-cycle of a solid torus bounds a disk inside it, so its circulation is zero
    _verify(sol, b_cyc, flux_b.b, a_cyc, tol)
    return sol


def _verify(sol: LimitSolution, cycles, targets, other_cycles, tol):
    got = _circulations(sol, cycles)
    other = _circulations(sol, other_cycles)
    sol.circulations.update({"prescribed": list(targets), "achieved": got, "derived": other})
    sol.residuals["boundary"] = _apply_bc_residual(sol)
    dev = max((abs(g - t) for g, t in zip(got, targets)), default=0.0)
    sol.residuals["circulation"] = dev
    if dev > tol:
        raise SolverError(f"circulation deviates from prescription by {dev:.3e}")


def eval_field(sol: LimitSolution, points, upsample: int = 2, check_region: bool = True) -> np.ndarray:
    """Scattered field at points in the solution's region."""
    x = np.asarray(points, dtype=float)
    pts = x.reshape(-1, 3)
    if check_region and len(pts):
        omega = _solid_angle(sol.grid, pts)
        inside = omega < -0.5
        bad = inside if sol.region == "exterior" else ~inside
        if np.any(bad):
            raise RegionError(f"{int(bad.sum())} point(s) outside the {sol.region} region")
    with warnings.catch_warnings():
        if not check_region:
            warnings.simplefilter("ignore")
        out = eval_gradS(sol.grid, sol.sigma, pts, upsample=upsample, check=check_region)
    out += sol.basis_field(pts)
    return out.reshape(x.shape)


@dataclass(frozen=True)
class TangentField:
    grid: SurfaceGrid
    vectors: np.ndarray

    def components(self) -> tuple[np.ndarray, np.ndarray]:
        """Covariant components ``(gamma . X_u, gamma . X_v)``."""
        g = self.grid
        return (np.einsum("ki,ki->k", self.vectors, g.xu),
                np.einsum("ki,ki->k", self.vectors, g.xv))


def sheet_current(sol: LimitSolution, incoming: IncomingField | None = None,
                  grid: SurfaceGrid | None = None) -> TangentField:
    """``gamma0 = B_tan x n`` from the total boundary field; the physical
    surface current is ``n x B = -gamma0``."""
    if grid is not None and grid is not sol.grid and grid != sol.grid:
        raise ValueError("sheet current is computed on the solution's grid")
    g = sol.grid
    inc = sol.incoming if incoming is None else incoming
    B = sol.trace() + inc.field(g.points)
    n = g.normals
    Bt = B - np.einsum("ki,ki->k", B, n)[:, None] * n
    return TangentField(g, np.cross(Bt, n))
