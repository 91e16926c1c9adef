"""Laplace layer potentials on Nyström grids.

Conventions (outward normal ``n``, ``g = 1 / (4 pi |x - y|)``)::

    interior limit of  d/dn S[sigma]  =  +sigma/2 + S'[sigma]
    exterior limit of  d/dn S[sigma]  =  -sigma/2 + S'[sigma]

They are fixed by the uniform shell on the unit sphere (potential 1 inside,
``1/|x|`` outside) and checked numerically by :func:`jump_check`.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, svds

from .geometry import TWO_PI, CyclePath, SurfaceGrid
from .quadrature import FOUR_PI, KERNELS, default_rule, kernel_values

OPERATOR_NAMES = {"S": "S", "D": "D", "Sp": "Sp", "Sprime": "Sp"}
_CHUNK = 400_000


class NearSurfaceWarning(UserWarning):
    """Off-surface evaluation closer than the smooth rule resolves."""


@dataclass(frozen=True)
class SurfaceDensity:
    grid: SurfaceGrid
    values: np.ndarray
    component: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"density has shape {vals.shape}, grid has {self.grid.n} nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density has non-finite values")
        object.__setattr__(self, "values", vals)

    def mean(self) -> float:
        return float(self.grid.weights @ self.values / self.grid.area)


# ---------------------------------------------------------------------------
# Off-surface evaluation
# ---------------------------------------------------------------------------


def _source_data(grid: SurfaceGrid, sigma, upsample: int):
    sigma = np.asarray(getattr(sigma, "values", sigma), dtype=float)
    if upsample > 1:
        fine = grid.refined(upsample)
        return fine.points, fine.weights * grid.resample(sigma, fine), fine.spacing
    return grid.points, grid.weights * sigma, grid.spacing


def _flag_near(grid: SurfaceGrid, x: np.ndarray, ys: np.ndarray, spacing: float):
    # cheap proximity test against the nodes of the (possibly refined) grid
    for start in range(0, len(x), max(1, _CHUNK // len(ys))):
        blk = x[start:start + max(1, _CHUNK // len(ys))]
        d2 = ((blk[:, None, :] - ys[None, :, :]) ** 2).sum(-1).min(axis=1)
        if np.any(d2 < (3.0 * spacing) ** 2):
            warnings.warn("evaluation point within 3 grid spacings of the surface; "
                          "smooth-rule accuracy degrades", NearSurfaceWarning, stacklevel=3)
            return


def _chunks(m: int, n: int):
    step = max(1, _CHUNK // max(n, 1))
    for a in range(0, m, step):
        yield slice(a, min(a + step, m))


def eval_S(grid: SurfaceGrid, sigma, x, upsample: int = 1, check: bool = True) -> np.ndarray:
    """Single-layer potential ``S[sigma](x)`` at off-surface points ``x`` (shape ``(..., 3)``)."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 3)
    ys, ws, h = _source_data(grid, sigma, upsample)
    if check:
        _flag_near(grid, pts, ys, h)
    out = np.empty(len(pts))
    for sl in _chunks(len(pts), len(ys)):
        r = np.linalg.norm(pts[sl, None, :] - ys[None, :, :], axis=-1)
        out[sl] = (ws / r).sum(axis=1) / FOUR_PI
    return out.reshape(x.shape[:-1])


def eval_gradS(grid: SurfaceGrid, sigma, x, upsample: int = 1, check: bool = True) -> np.ndarray:
    """Gradient ``grad_x S[sigma](x)`` at off-surface points."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 3)
    ys, ws, h = _source_data(grid, sigma, upsample)
    if check:
        _flag_near(grid, pts, ys, h)
    out = np.empty((len(pts), 3))
    for sl in _chunks(len(pts), len(ys)):
        d = pts[sl, None, :] - ys[None, :, :]
        r2 = (d * d).sum(-1)
        c = ws / (r2 * np.sqrt(r2))
        out[sl] = -np.einsum("mn,mnk->mk", c, d) / FOUR_PI
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# On-surface operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerOperators:
    """Dense Nyström matrices of S, D and S' on one grid."""

    grid: SurfaceGrid
    S: np.ndarray
    D: np.ndarray
    Sp: np.ndarray
    rule: object = field(default=None, compare=False)

    def matrix(self, op: str) -> np.ndarray:
        try:
            return getattr(self, OPERATOR_NAMES[op])
        except KeyError:
            raise ValueError(f"unknown operator {op!r}") from None

    def apply(self, op: str, sigma) -> np.ndarray:
        return self.matrix(op) @ np.asarray(getattr(sigma, "values", sigma), dtype=float)


def assemble_operators(grid: SurfaceGrid, rule=None) -> LayerOperators:
    rule = rule if rule is not None else default_rule(grid)
    mats = rule.assemble(grid, KERNELS)
    return LayerOperators(grid, mats["S"], mats["D"], mats["Sp"], rule)


def on_surface(grid: SurfaceGrid, op: str, sigma, operators: LayerOperators | None = None) -> SurfaceDensity:
    """Apply ``S``, ``D`` or ``Sprime`` to a density on the same grid."""
    if op not in OPERATOR_NAMES:
        raise ValueError(f"unknown operator {op!r}")
    if isinstance(sigma, SurfaceDensity) and sigma.grid is not grid and sigma.grid != grid:
        raise ValueError("density lives on a different grid")
    vals = np.asarray(getattr(sigma, "values", sigma), dtype=float)
    if vals.shape != (grid.n,):
        raise ValueError(f"density has {vals.size} values, grid has {grid.n} nodes")
    if operators is None:
        operators = assemble_operators(grid)
    elif operators.grid is not grid and operators.grid != grid:
        raise ValueError("operators were assembled on a different grid")
    comp = sigma.component if isinstance(sigma, SurfaceDensity) else 0
    return SurfaceDensity(grid, operators.apply(op, vals), comp)


def cross_operator(target: SurfaceGrid, source: SurfaceGrid, op: str, upsample: int = 2) -> np.ndarray:
    """Block coupling two disjoint surfaces with the plain smooth rule.

    The source density is carried to a grid refined by ``upsample`` before
    summation, so the returned matrix acts on the coarse source nodes.
    """
    kind = OPERATOR_NAMES.get(op)
    if kind is None:
        raise ValueError(f"unknown operator {op!r}")
    fine = source.refined(upsample) if upsample > 1 else source
    K = np.empty((target.n, fine.n))
    for sl in _chunks(target.n, fine.n):
        x0 = target.points[sl, None, :]
        n0 = target.normals[sl, None, :]
        K[sl] = kernel_values([kind], x0, n0, fine.points[None], fine.normals[None])[0]
    K *= fine.weights[None, :]
    if fine is source:
        return K
    Lu, Lv = source.resample_matrix(fine)
    K = (K.reshape(-1, fine.nv) @ Lv).reshape(target.n, fine.nu, source.nv)
    K = np.matmul(Lu.T, K)
    return K.reshape(target.n, source.n)


# ---------------------------------------------------------------------------
# Jump relations and Calderón identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpReport:
    interior_dn: np.ndarray
    exterior_dn: np.ndarray
    predicted_interior: np.ndarray
    predicted_exterior: np.ndarray
    tangential_jump: float
    sigma: np.ndarray

    @property
    def jump(self) -> np.ndarray:
        return self.exterior_dn - self.interior_dn

    def max_errors(self) -> dict[str, float]:
        sigma = self.sigma
        scale = max(1.0, float(np.abs(sigma).max()))
        return {
            "jump": float(np.abs(self.jump + sigma).max() / scale),
            "interior": float(np.abs(self.interior_dn - self.predicted_interior).max() / scale),
            "exterior": float(np.abs(self.exterior_dn - self.predicted_exterior).max() / scale),
            "tangential": self.tangential_jump / scale,
        }


def jump_check(grid: SurfaceGrid, sigma, operators: LayerOperators | None = None,
               nodes=None, offsets=None, upsample: int | None = None) -> JumpReport:
    """Extrapolate ``grad S[sigma]`` to the surface from both sides.

    The gradient is sampled at ``x_k +- h n_k`` and extrapolated to ``h = 0``
    with an interpolating polynomial.  By default the sources are refined to
    at least 512 nodes per direction and ``h`` runs over 4..32 fine spacings.
    Only the nodes in ``nodes`` are probed.
    """
    sigma = np.asarray(getattr(sigma, "values", sigma), dtype=float)
    if operators is None:
        operators = assemble_operators(grid)
    nodes = np.arange(grid.n) if nodes is None else np.asarray(nodes)
    if upsample is None:
        upsample = max(2, -(-512 // min(grid.nu, grid.nv)))
    if offsets is None:
        offsets = grid.spacing / upsample * np.linspace(4.0, 32.0, 10)
    offsets = np.asarray(offsets, dtype=float)
    x, n = grid.points[nodes], grid.normals[nodes]
    limits = {}
    for side, s in (("int", -1.0), ("ext", 1.0)):
        samples = np.stack([eval_gradS(grid, sigma, x + s * h * n[:, :], upsample=upsample, check=False)
                            for h in offsets])
        # Lagrange extrapolation to h = 0
        wts = np.array([np.prod([hj / (hj - hi) for hj in offsets if hj != hi]) for hi in offsets])
        limits[side] = np.tensordot(wts, samples, axes=(0, 0))
    dn_int = (limits["int"] * n).sum(-1)
    dn_ext = (limits["ext"] * n).sum(-1)
    tan = lambda g: g - (g * n).sum(-1)[:, None] * n  # noqa: E731
    tjump = float(np.abs(tan(limits["ext"]) - tan(limits["int"])).max())
    spv = operators.Sp[nodes] @ sigma
    sig = sigma[nodes]
    return JumpReport(dn_int, dn_ext, 0.5 * sig + spv, -0.5 * sig + spv, tjump, sig)


def weighted(M: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Similarity transform ``W^(1/2) M W^(-1/2)`` to the L2(dS) inner product."""
    s = np.sqrt(weights)
    return s[:, None] * M / s[None, :]


def weighted_norm(apply, weights: np.ndarray, adjoint=None) -> float:
    """L2(dS) operator norm of a matrix-free map, by a truncated SVD."""
    s = np.sqrt(weights)
    n = len(weights)
    if adjoint is None:
        raise ValueError("adjoint action is required")
    op = LinearOperator((n, n), dtype=float,
                        matvec=lambda x: s * apply(np.ravel(x) / s),
                        rmatvec=lambda x: adjoint(np.ravel(x) * s) / s)
    # deterministic start vector keeps repeated runs bit-identical
    v0 = np.cos(np.arange(n) * 0.7 + 0.3)
    return float(svds(op, k=1, v0=v0, return_singular_vectors=False, tol=1e-8)[0])


def calderon_residual(ops: LayerOperators) -> float:
    """L2(dS) operator norm of ``DS - SS'`` relative to ``||S||``."""
    S, D, Sp = ops.S, ops.D, ops.Sp
    w = ops.grid.weights
    num = weighted_norm(lambda x: D @ (S @ x) - S @ (Sp @ x), w,
                        adjoint=lambda y: S.T @ (D.T @ y) - Sp.T @ (S.T @ y))
    den = weighted_norm(lambda x: S @ x, w, adjoint=lambda y: S.T @ y)
    return num / den


# ---------------------------------------------------------------------------
# Current loops
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoopSource:
    """Closed filament ``c(t)``, ``t in [0, 2 pi)``, carrying ``current``."""

    curve: Callable[[np.ndarray], np.ndarray]
    dcurve: Callable[[np.ndarray], np.ndarray]
    current: float = 1.0
    n_quad: int = 512
    margin: float = 1e-3

    @classmethod
    def circle(cls, center=(0.0, 0.0, 0.0), radius: float = 1.0, axis=(0.0, 0.0, 1.0),
               current: float = 1.0, n_quad: int = 512) -> "LoopSource":
        c = np.asarray(center, dtype=float)
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        e1 = np.cross(a, [1.0, 0.0, 0.0] if abs(a[0]) < 0.9 else [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(a, e1)

        def curve(t):
            t = np.asarray(t)[..., None]
            return c + radius * (np.cos(t) * e1 + np.sin(t) * e2)

        def dcurve(t):
            t = np.asarray(t)[..., None]
            return radius * (-np.sin(t) * e1 + np.cos(t) * e2)

        return cls(curve, dcurve, current, n_quad)

    @classmethod
    def from_cycle(cls, cycle: CyclePath, current: float = 1.0, n_quad: int = 512) -> "LoopSource":
        return cls(cycle.curve, cycle.dcurve, current, n_quad)

    def nodes(self):
        t = np.arange(self.n_quad) * TWO_PI / self.n_quad
        return self.curve(t), self.dcurve(t) * (TWO_PI / self.n_quad)

    def scaled(self, factor: float) -> "LoopSource":
        return LoopSource(self.curve, self.dcurve, self.current * factor, self.n_quad, self.margin)


def biot_savart(loop: LoopSource, x) -> np.ndarray:
    """``(I / 4 pi) oint dl x (x - y) / |x - y|^3`` by the periodic trapezoid rule."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 3)
    y, dl = loop.nodes()
    out = np.empty_like(pts)
    for sl in _chunks(len(pts), len(y)):
        d = pts[sl, None, :] - y[None, :, :]
        r2 = (d * d).sum(-1)
        if np.any(r2 < loop.margin ** 2):
            raise ValueError("evaluation point lies on or too close to the current loop")
        c = 1.0 / (r2 * np.sqrt(r2))
        out[sl] = np.einsum("mn,mnk->mk", c, np.cross(dl[None, :, :], d))
    return (loop.current / FOUR_PI) * out.reshape(x.shape)


# ---------------------------------------------------------------------------
# Matrix dumps
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<QQ")


def dump_matrix(path, M) -> None:
    """Write ``M`` as two little-endian uint64 (rows, cols) then row-major float64."""
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2:
        raise ValueError("only 2-D matrices can be dumped")
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(*M.shape))
        fh.write(M.tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    rows, cols = _HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != rows * cols:
        raise ValueError("matrix file is truncated or malformed")
    return body.reshape(rows, cols).astype(float)
