"""Spectra of the boundary operator S' on one or two boundary components.

S' is self-adjoint in the inner product ``<S ., .>`` (a consequence of
``DS = SS'`` and ``D = S'^*``), so the discrete spectrum is computed from the
symmetric matrix ``S_w^(1/2) S'_w S_w^(-1/2)``, where ``X_w`` denotes the
similarity ``W^(1/2) X W^(-1/2)`` to the L2(dS) inner product.  A plain
nonsymmetric eigensolve is kept as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import sph_harm_y

from .geometry import SurfaceGrid
from .layer_potentials import (
    LayerOperators,
    assemble_operators,
    calderon_residual,
    cross_operator,
    eval_S,
    weighted,
    weighted_norm,
)


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BlockOperators:
    """Layer operators over the union of one or more boundary components."""

    grids: tuple[SurfaceGrid, ...]
    S: np.ndarray
    D: np.ndarray
    Sp: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([g.weights for g in self.grids])

    @property
    def sizes(self) -> list[int]:
        return [g.n for g in self.grids]


def block_operators(grids, operators=None, upsample: int = 2) -> BlockOperators:
    """Diagonal blocks by singular quadrature, off-diagonal blocks by the smooth rule."""
    grids = (grids,) if isinstance(grids, SurfaceGrid) else tuple(grids)
    ops = list(operators) if operators is not None else [assemble_operators(g) for g in grids]
    if len(ops) != len(grids):
        raise ValueError("one operator set per grid is required")
    out = {}
    for kind in ("S", "D", "Sp"):
        rows = []
        for a, ga in enumerate(grids):
            row = []
            for b, gb in enumerate(grids):
                row.append(ops[a].matrix(kind) if a == b else cross_operator(ga, gb, kind, upsample))
            rows.append(row)
        out[kind] = np.block(rows)
    return BlockOperators(grids, out["S"], out["D"], out["Sp"])


def _as_block(ops) -> BlockOperators:
    if isinstance(ops, BlockOperators):
        return ops
    if isinstance(ops, LayerOperators):
        return BlockOperators((ops.grid,), ops.S, ops.D, ops.Sp)
    raise TypeError("expected LayerOperators or BlockOperators")


def block_calderon_residual(ops) -> float:
    ops = _as_block(ops)
    if len(ops.grids) == 1:
        return calderon_residual(LayerOperators(ops.grids[0], ops.S, ops.D, ops.Sp))
    S, D, Sp, w = ops.S, ops.D, ops.Sp, ops.weights
    num = weighted_norm(lambda x: D @ (S @ x) - S @ (Sp @ x), w,
                        adjoint=lambda y: S.T @ (D.T @ y) - Sp.T @ (S.T @ y))
    den = weighted_norm(lambda x: S @ x, w, adjoint=lambda y: S.T @ y)
    return num / den


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    s_eigenvalues: np.ndarray
    calderon: float
    symmetry_defect: float
    nonsymmetric_imag: float
    n_components: int
    flags: dict = field(default_factory=dict)

    def gap_multiplicity(self, target: float, ratio: float = 10.0) -> dict:
        """Count of eigenvalues near ``target`` before the first relative gap.

        The discretization defect is the larger of the Calderón residual and
        the asymmetry of the weighted S; eigenvalues within ``ratio`` times
        the defect of ``target`` form the cluster, and simplicity needs the
        next one to sit beyond that band.
        """
        ev = self.eigenvalues
        d = np.sort(np.abs(ev - target))
        tol = max(ratio * max(self.calderon, self.symmetry_defect), 1e-12)
        count = int(np.sum(d < tol))
        gap = float(d[count] if count < len(d) else np.inf)
        return {"distance": float(d[0]), "count": count, "gap": gap, "tol": tol,
                "simple": count == 1 and gap > tol}


def resolved_basis(grid: SurfaceGrid) -> np.ndarray | None:
    """Orthonormal basis (Euclidean, after weighting) of the resolved nodal functions.

    On the latitude-longitude sphere, nodal vectors with high azimuthal
    frequency in the polar rows correspond to no resolved function; the
    basis spans real spherical harmonics up to degree
    ``min(n_theta - 1, n_phi / 2 - 1)``.  The polar nodes are Gauss points
    in ``theta`` rather than ``cos(theta)``, so the grid Gram matrix of the
    harmonics is only spectrally close to the identity; a QR factorization
    makes the basis orthonormal.  Other charts return ``None``.
    """
    if grid.surface.kind != "sphere":
        return None
    L = min(grid.nu - 1, grid.nv // 2 - 1)
    U, V = grid.param_nodes()
    cols = []
    for n in range(L + 1):
        for m in range(0, n + 1):
            y = sph_harm_y(n, m, U, V)
            if m == 0:
                cols.append(y.real)
            else:
                cols += [np.sqrt(2.0) * y.real, np.sqrt(2.0) * y.imag]
    R = grid.surface.params["radius"]
    Y = np.array(cols).T / R
    Q, _ = np.linalg.qr(np.sqrt(grid.weights)[:, None] * Y)
    return Q


def sprime_spectrum(grids, operators=None, check_nonsymmetric: bool = True) -> SpectrumReport:
    """Eigenvalues of S' (ascending) on one surface or a union of surfaces."""
    if isinstance(operators, (LayerOperators, BlockOperators)):
        ops = _as_block(operators)
    else:
        ops = block_operators(grids, operators)
    w = ops.weights
    Q = resolved_basis(ops.grids[0]) if len(ops.grids) == 1 else None
    Sw = weighted(ops.S, w)
    Spw = weighted(ops.Sp, w)
    if Q is not None:
        Sw, Spw = Q.T @ Sw @ Q, Q.T @ Spw @ Q
    sym_defect = float(np.abs(Sw - Sw.T).max() / np.abs(Sw).max())
    Sw = 0.5 * (Sw + Sw.T)
    s_eval, V = scipy.linalg.eigh(Sw)
    if s_eval[0] <= 0.0:
        raise SpectrumError(f"S is not positive definite (min eigenvalue {s_eval[0]:.3e})")
    half = (V * np.sqrt(s_eval)) @ V.T
    ihalf = (V / np.sqrt(s_eval)) @ V.T
    M = half @ Spw @ ihalf
    M = 0.5 * (M + M.T)
    mu = scipy.linalg.eigvalsh(M)
    imag = 0.0
    if check_nonsymmetric:
        ev = scipy.linalg.eigvals(Spw)
        imag = float(np.abs(ev.imag).max())
    cal = block_calderon_residual(ops)
    rep = SpectrumReport(mu, s_eval[::-1].copy(), cal, sym_defect, imag, len(ops.grids))
    lo = rep.gap_multiplicity(-0.5)
    rep.flags.update({
        "min": float(mu[0]),
        "max": float(mu[-1]),
        "contained": bool(mu[0] >= -0.5 - lo["tol"] and mu[-1] < 0.5 + (lo["tol"] if len(ops.grids) > 1 else 0.0)),
        "minus_half": lo,
    })
    if len(ops.grids) > 1:
        rep.flags["plus_half"] = rep.gap_multiplicity(0.5)
    return rep


def b_spectrum_from_sprime(report: SpectrumReport) -> dict:
    """Induced values ``-(mu + 1/2)`` for a single connected surface."""
    if report.n_components != 1:
        raise ValueError("single-surface report expected")
    vals = -(report.eigenvalues + 0.5)
    tol = report.flags["minus_half"]["tol"]
    m = float(np.max(report.eigenvalues + 0.5))
    return {
        "values": vals,
        "m": m,
        "contained": bool(vals.min() > -1.0 and vals.max() <= tol),
        "zero_simple": report.flags["minus_half"]["simple"],
    }


def thinshell_B_spectrum(report: SpectrumReport, band: float = 0.1) -> dict:
    """Values ``-(1/2 + mu)`` for a two-component boundary."""
    if report.n_components != 2:
        raise ValueError("two-component report expected")
    vals = -(0.5 + report.eigenvalues)
    tol = report.flags["minus_half"]["tol"]
    interior = vals[(vals > -1.0 + tol) & (vals < -tol)]
    return {
        "values": vals,
        "contained": bool(vals.min() >= -1.0 - tol and vals.max() <= tol),
        "minus_one_simple": report.flags["plus_half"]["simple"],
        "zero_simple": report.flags["minus_half"]["simple"],
        "bulk_fraction": float(np.mean(np.abs(vals + 0.5) < band)),
        "bulk_median": float(np.median(interior)) if len(interior) else float("nan"),
    }


def equilibrium_density(ops: LayerOperators) -> np.ndarray:
    """Null vector of ``I/2 + S'`` (the density with ``S'g = -g/2``), unit mean."""
    A = ops.Sp + 0.5 * np.eye(ops.grid.n)
    _, _, vt = np.linalg.svd(A)
    g = vt[-1]
    return g / (ops.grid.weights @ g / ops.grid.area)


def equilibrium_potential_spread(ops: LayerOperators, probes) -> float:
    """Relative spread of ``S[g0]`` over interior probe points (zero in exact arithmetic)."""
    g0 = equilibrium_density(ops)
    vals = eval_S(ops.grid, g0, probes, upsample=2, check=False)
    return float(np.std(vals) / abs(np.mean(vals)))


def sphere_oracle(n_max: int):
    """``(S, S')`` eigenvalue lists of the unit sphere with multiplicities, degree ``<= n_max``."""
    s, sp = [], []
    for n in range(n_max + 1):
        s += [1.0 / (2 * n + 1)] * (2 * n + 1)
        sp += [-1.0 / (2 * (2 * n + 1))] * (2 * n + 1)
    return np.array(s), np.array(sp)


def sphere_spectrum_errors(report: SpectrumReport, n_max: int = 8, radius: float = 1.0) -> dict:
    s, sp = sphere_oracle(n_max)
    k = len(s)
    return {
        "S": float(np.abs(report.s_eigenvalues[:k] / radius - s).max()),
        "Sp": float(np.abs(report.eigenvalues[:k] - sp).max()),
    }
