"""Experiment runners.  Each fills a manifest and writes its data files."""

from __future__ import annotations

import time
import warnings
from pathlib import Path

import numpy as np
from scipy import special

from .. import boundary_layer as bl
from .. import model_problems as mp
from ..fitting import fit_slope
from ..geometry import build_collar, build_surface, estimate_reach, sample_grid
from ..layer_potentials import LoopSource, assemble_operators, calderon_residual, jump_check
from ..limit_solver import (
    DipoleSource,
    FluxSpec,
    IncomingField,
    LoopFieldSource,
    MonopoleSource,
    UniformSource,
    sheet_current,
    solve_exterior_limit,
    solve_interior_limit,
)
from ..quadrature import PolarPatchRule, RotatedSphereRule
from ..spectral_checks import (
    b_spectrum_from_sprime,
    equilibrium_potential_spread,
    sphere_spectrum_errors,
    sprime_spectrum,
    thinshell_B_spectrum,
)
from .config import ConfigError, RunConfig
from .manifest import SPECTRUM_COLUMNS, SWEEP_COLUMNS, TRACE_COLUMNS, RunManifest, write_csv

# Default thresholds per experiment; configs may override any of these names.
TOLERANCES = {
    "validate": {"gauss": 1e-8, "single_layer": 1e-8, "calderon": 1e-6, "runtime": 60.0,
                 "jump": 1e-6},
    "solve": {"circulation": 1e-6, "boundary": 1e-6, "reference": 1e-6, "zero_solution": 1e-8},
    "betalayer": {"slope_tol": 0.05, "sheet_slope_tol": 0.1, "pairing_slope_min": 0.9,
                  "r2_min": 0.98, "trace": 1e-6, "runtime": 300.0},
    "spectra": {"oracle": 1e-6, "calderon": 1e-4, "bulk_band": 0.1, "bulk_median_tol": 0.05,
                "equilibrium": 1e-4},
    "disk": {"k10": 1e-10, "slope_tol": 0.1, "r2_min": 0.98, "tail": 1e-8, "envelope_order": 1e-12},
    "sphere": {"slope_tol": 0.1, "r2_min": 0.98, "collar_slope_min": 0.4, "dipole": 1e-6,
               "bvp": 1e-8, "continuity": 1e-10},
    "convergence": {"gauss": 1e-6, "calderon": 1e-4},
}

K10 = 2.404825557695773


def check_tolerance_names(cfg: RunConfig):
    allowed = TOLERANCES[cfg.experiment]
    unknown = sorted(set(cfg.tolerances) - set(allowed))
    if unknown:
        raise ConfigError(f"config.tolerances: unknown name(s) {', '.join(unknown)} "
                          f"for experiment {cfg.experiment!r}")


def tol(cfg: RunConfig, name: str) -> float:
    return float(cfg.tolerances.get(name, TOLERANCES[cfg.experiment][name]))


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------


def make_surface(sc):
    params = dict(sc.params)
    if sc.kind == "twisted_torus" and "coeffs" in params:
        params["coeffs"] = {(int(i), int(j)): float(d) for i, j, d in params["coeffs"]}
    surf = build_surface(sc.kind, **params)
    return surf


def make_grids(cfg: RunConfig, n_u=None, n_v=None, honour_flip=True):
    n_u = n_u or cfg.numeric.n_u
    n_v = n_v or cfg.numeric.n_v
    out = []
    for sc in cfg.geometry.surfaces:
        g = sample_grid(make_surface(sc), n_u, n_v)
        out.append(g.flipped() if (sc.flip and honour_flip) else g)
    if not out:
        raise ConfigError("config.geometry.surfaces: at least one surface is required")
    return out


def make_rule(cfg: RunConfig, grid):
    if grid.surface.kind == "sphere":
        return RotatedSphereRule()
    nc = cfg.numeric
    return PolarPatchRule(n_radial=nc.n_radial, n_angular=nc.n_angular, upsample=nc.upsample)


def make_operators(cfg, grid):
    return assemble_operators(grid, make_rule(cfg, grid))


def make_incoming(cfg: RunConfig) -> IncomingField:
    src = []
    for s in cfg.sources.items:
        if s.type == "uniform":
            src.append(UniformSource(tuple(s.amplitude)))
        elif s.type == "dipole":
            src.append(DipoleSource(tuple(s.location), tuple(s.moment)))
        elif s.type == "loop":
            src.append(LoopFieldSource(LoopSource.circle(s.center, s.radius, s.axis, s.current)))
        else:
            src.append(MonopoleSource(tuple(s.location), s.charge))
    return IncomingField(tuple(src), cfg.sources.region)


def collar_r0(cfg: RunConfig, grid) -> tuple[float, float]:
    reach = estimate_reach(grid)
    r0 = cfg.numeric.r0 if cfg.numeric.r0 is not None else cfg.numeric.r0_fraction * reach
    return float(r0), float(reach)


def _sweep_rows(rows, keys):
    return [(r["lambda"], k, r[k]) for r in rows for k in keys]


def _slope_checks(man: RunManifest, name: str, fit, target, tol_, r2_min):
    man.fits[name] = fit.as_dict()
    man.check(f"{name}_slope", fit.slope, "within", [target, tol_])
    man.check(f"{name}_r2", fit.r2, "gt", r2_min)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def run_validate(cfg: RunConfig, man: RunManifest, out: Path, rng):
    t0 = time.perf_counter()
    for k, grid in enumerate(make_grids(cfg)):
        tag = f"surface{k}"
        with man.stage(f"{tag}_assembly") as res:
            ops = make_operators(cfg, grid)
            res["n"] = grid.n
        with man.stage(f"{tag}_identities") as res:
            ones = np.ones(grid.n)
            target = 0.5 if cfg.geometry.surfaces[k].flip else -0.5
            gauss = float(np.abs(ops.D @ ones - target).max())
            res["gauss"] = gauss
            man.check(f"{tag}_gauss", gauss, "lt", tol(cfg, "gauss"), "max |D[1] + 1/2|")
            if grid.surface.kind == "sphere":
                R = grid.surface.params["radius"]
                s1 = float(np.abs(ops.S @ ones - R).max() / R)
                res["single_layer"] = s1
                man.check(f"{tag}_single_layer", s1, "lt", tol(cfg, "single_layer"), "max |S[1] - R| / R")
            cal = calderon_residual(ops)
            res["calderon"] = cal
            man.check(f"{tag}_calderon", cal, "lt", tol(cfg, "calderon"), "||DS - SS'|| / ||S||")
        if cfg.numeric.jump_check:
            with man.stage(f"{tag}_jump") as res:
                c = rng.normal(size=3)
                sigma = 1.0 + grid.points @ c / np.abs(grid.points).max()
                rep = jump_check(grid, sigma, operators=ops)
                err = max(rep.max_errors().values())
                res["jump"] = err
                man.check(f"{tag}_jump", err, "lt", tol(cfg, "jump"))
    man.check("runtime", time.perf_counter() - t0, "lt", tol(cfg, "runtime"), "seconds")


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _trace_rows(grid, B, gamma):
    U, V = grid.param_nodes()
    n = grid.normals
    Bn = np.einsum("ki,ki->k", B, n)
    Bt = B - Bn[:, None] * n
    gu = np.einsum("ki,ki->k", gamma, grid.xu)
    gv = np.einsum("ki,ki->k", gamma, grid.xv)
    P = grid.points
    return [(U.ravel()[k], V.ravel()[k], *P[k], *B[k], Bn[k], np.linalg.norm(Bt[k]), gu[k], gv[k])
            for k in range(grid.n)]


def _l2(grid, F):
    return float(np.sqrt(grid.weights @ (np.asarray(F) ** 2).sum(axis=-1)))


def _record_solution(cfg, man, sol, tag, out, fname):
    res = sol.residuals
    man.stages[f"{tag}_solve"]["residuals"].update(
        {k: float(v) for k, v in res.items()})
    man.stages[f"{tag}_solve"]["circulations"] = sol.circulations
    if sol.circulations.get("prescribed"):
        man.check(f"{tag}_circulation", res["circulation"], "lt", tol(cfg, "circulation"),
                  "max |achieved - prescribed|")
    man.check(f"{tag}_boundary", res["boundary"], "lt", tol(cfg, "boundary"),
              "max |B.n + B_in.n| relative")
    B = sol.total_trace()
    gamma = sheet_current(sol).vectors
    write_csv(out / fname, TRACE_COLUMNS, _trace_rows(sol.grid, B, gamma))
    man.files.append(fname)
    return B, gamma


def run_solve(cfg: RunConfig, man: RunManifest, out: Path, rng):
    grids = make_grids(cfg, honour_flip=False)
    incoming = make_incoming(cfg)
    flux = cfg.flux
    if len(grids) == 1:
        grid = grids[0]
        with man.stage("assembly"):
            ops = make_operators(cfg, grid)
        with man.stage("surface_solve"):
            if cfg.sources.region == "outer":
                sol = solve_exterior_limit(grid, incoming, FluxSpec(a=flux.a), operators=ops,
                                           tol=tol(cfg, "circulation"))
            else:
                sol = solve_interior_limit(grid, incoming, FluxSpec(b=flux.b), operators=ops,
                                           tol=tol(cfg, "circulation"))
        B, gamma = _record_solution(cfg, man, sol, "surface", out, "trace.csv")
        if cfg.reference == "sphere_uniform":
            _sphere_reference(cfg, man, sol, incoming, gamma)
        elif cfg.reference == "axis_field":
            _axis_reference(cfg, man, sol, B, "surface")
        return
    outer, inner = grids
    inc_out = incoming if cfg.sources.region == "outer" else IncomingField((), "outer")
    inc_in = incoming if cfg.sources.region == "inner" else IncomingField((), "inner")
    with man.stage("outer_assembly"):
        ops_o = make_operators(cfg, outer)
    with man.stage("outer_solve"):
        sol_o = solve_exterior_limit(outer, inc_out, FluxSpec(a=flux.a), operators=ops_o,
                                     tol=tol(cfg, "circulation"))
    Bo, _ = _record_solution(cfg, man, sol_o, "outer", out, "trace_outer.csv")
    with man.stage("inner_assembly"):
        ops_i = make_operators(cfg, inner)
    with man.stage("inner_solve"):
        sol_i = solve_interior_limit(inner, inc_in, FluxSpec(b=flux.b), operators=ops_i,
                                     tol=tol(cfg, "circulation"))
    man.stages["inner_solve"]["residuals"]["compatibility"] = sol_i.residuals.get("compatibility", 0.0)
    Bi, _ = _record_solution(cfg, man, sol_i, "inner", out, "trace_inner.csv")
    if cfg.reference == "axis_field":
        _axis_reference(cfg, man, sol_i, Bi, "inner")
        if inc_out.is_zero and all(a == 0.0 for a in flux.a):
            norm = _l2(outer, Bo)
            man.check("outer_zero_solution", norm, "lt", tol(cfg, "zero_solution"), "L2 norm of the outer trace")


def _axis_reference(cfg, man, sol, B, tag):
    b = sol.coefficients[0] if sol.coefficients else 0.0
    P = sol.grid.points
    rho2 = P[:, 0] ** 2 + P[:, 1] ** 2
    ref = b * np.stack([-P[:, 1], P[:, 0], np.zeros(len(P))], -1) / (2.0 * np.pi * rho2[:, None])
    ref = ref + sol.incoming.field(P)
    err = _l2(sol.grid, B - ref) / max(_l2(sol.grid, ref), 1e-300)
    man.check(f"{tag}_axis_field_error", err, "lt", tol(cfg, "reference"),
              "relative L2 trace error against b (-y, x, 0) / (2 pi rho^2)")


def _sphere_reference(cfg, man, sol, incoming, gamma):
    grid = sol.grid
    R = grid.surface.params["radius"]
    B0 = incoming.field(np.zeros((1, 3)))[0]
    m = sol.dipole_moment()
    err = float(np.linalg.norm(m + 0.5 * R ** 3 * B0) / (np.linalg.norm(B0) * R ** 3))
    man.check("dipole_moment_error", err, "lt", tol(cfg, "reference"), "|m + R^3 B0 / 2| / (|B0| R^3)")
    bhat = B0 / np.linalg.norm(B0)
    cos = grid.points @ bhat / R
    sheet = 1.5 * np.linalg.norm(B0) * np.sqrt(np.clip(1.0 - cos ** 2, 0.0, None))
    e2 = float(np.abs(np.linalg.norm(gamma, axis=1) - sheet).max() / np.linalg.norm(B0))
    man.check("sheet_magnitude_error", e2, "lt", tol(cfg, "reference"), "max ||gamma0| - 3/2 |B0| sin|")


# ---------------------------------------------------------------------------
# betalayer
# ---------------------------------------------------------------------------


def pairing_proxy(x):
    """Vector proxy ``(z, x, y)`` of the test 2-form used in the pairing."""
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 2], x[..., 0], x[..., 1]], -1)


def beta_lambdas(cfg: RunConfig, r0: float) -> list[float]:
    nc = cfg.numeric
    if nc.lambdas:
        return [float(l) for l in nc.lambdas]
    return [nc.lambda_max_over_r0 * r0 * 0.5 ** k for k in range(nc.n_lambda)]


def run_betalayer(cfg: RunConfig, man: RunManifest, out: Path, rng):
    t0 = time.perf_counter()
    grid = make_grids(cfg)[0]
    incoming = make_incoming(cfg)
    with man.stage("limit_solve") as res:
        ops = make_operators(cfg, grid)
        sol = solve_exterior_limit(grid, incoming, FluxSpec(a=cfg.flux.a), operators=ops)
        res.update(sol.residuals)
    gamma = sheet_current(sol).vectors
    Bt = bl.tangential(sol.total_trace(), grid)
    r0, reach = collar_r0(cfg, grid)
    lams = beta_lambdas(cfg, r0)
    with man.stage("collar") as res:
        collar = build_collar(grid, r0, n_rho=cfg.numeric.n_rho, lam_min=min(lams), reach=reach)
        res.update({"r0": r0, "reach": reach, "n_rho": collar.n_rho})
    rows = []
    with man.stage("sweep") as res:
        for lam in lams:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                beta = bl.build_beta(collar, gamma, lam, B_tangential=Bt, trace_tol=tol(cfg, "trace"))
            norms = bl.collar_norms(beta)
            pair = bl.pair_with_testform(beta, pairing_proxy)
            rows.append({
                "lambda": lam,
                "L2": norms["L2"],
                "L1": norms["L1"],
                "residual_L2": norms["residual_L2"],
                "sheet_error": bl.sheet_error(beta),
                "pairing_difference": abs(pair["difference"]),
                "trace_error": beta.trace_error,
                "closedness": beta.closedness_residual(),
                "radial_rule_error": norms["radial_rule_error"],
            })
        res["max_trace_error"] = max(r["trace_error"] for r in rows)
        res["max_closedness"] = max(r["closedness"] for r in rows)
    keys = ("L2", "L1", "residual_L2", "sheet_error", "pairing_difference", "trace_error",
            "closedness", "radial_rule_error")
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, _sweep_rows(rows, keys))
    man.files.append("sweep.csv")
    r2 = tol(cfg, "r2_min")
    st = tol(cfg, "slope_tol")
    for key, target in (("L2", 0.5), ("L1", 1.0), ("residual_L2", -0.5)):
        _slope_checks(man, key, fit_slope([(r["lambda"], r[key]) for r in rows]), target, st, r2)
    _slope_checks(man, "sheet_error", fit_slope([(r["lambda"], r["sheet_error"]) for r in rows]),
                  1.0, tol(cfg, "sheet_slope_tol"), r2)
    fp = fit_slope([(r["lambda"], r["pairing_difference"]) for r in rows])
    man.fits["pairing_difference"] = fp.as_dict()
    man.check("pairing_difference_slope", fp.slope, "ge", tol(cfg, "pairing_slope_min"))
    man.check("trace_identity", max(r["trace_error"] for r in rows), "lt", tol(cfg, "trace"))
    man.check("runtime", time.perf_counter() - t0, "lt", tol(cfg, "runtime"), "seconds")


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


def _interior_probes(grid, reach, n, rng):
    idx = rng.choice(grid.n, size=min(n, grid.n), replace=False)
    return grid.points[idx] - 0.5 * reach * grid.normals[idx]


def run_spectra(cfg: RunConfig, man: RunManifest, out: Path, rng):
    grids = make_grids(cfg)
    with man.stage("assembly"):
        ops = [make_operators(cfg, g) for g in grids]
    with man.stage("spectrum") as res:
        arg = ops[0] if len(grids) == 1 else ops
        rep = sprime_spectrum(grids if len(grids) > 1 else grids[0], arg,
                              check_nonsymmetric=cfg.numeric.check_nonsymmetric)
        res.update({"calderon": rep.calderon, "symmetry_defect": rep.symmetry_defect,
                    "nonsymmetric_imag": rep.nonsymmetric_imag,
                    "min": rep.flags["min"], "max": rep.flags["max"]})
    write_csv(out / "spectrum.csv", SPECTRUM_COLUMNS, list(enumerate(rep.eigenvalues)))
    write_csv(out / "spectrum_S.csv", SPECTRUM_COLUMNS, list(enumerate(rep.s_eigenvalues)))
    man.files += ["spectrum.csv", "spectrum_S.csv"]
    man.check("calderon", rep.calderon, "lt", tol(cfg, "calderon"))
    man.check("sprime_contained", rep.flags["contained"], "true", note="spectrum of S' in [-1/2, 1/2)")
    man.check("minus_half_simple", rep.flags["minus_half"]["simple"], "true")
    man.stages["spectrum"]["minus_half"] = rep.flags["minus_half"]
    if len(grids) == 1:
        B = b_spectrum_from_sprime(rep)
        man.stages["spectrum"]["residuals"]["m"] = B["m"]
        man.check("B_values_contained", B["contained"], "true", note="induced values in (-1, 0]")
        g = grids[0]
        with man.stage("equilibrium") as res:
            reach = estimate_reach(g)
            spread = equilibrium_potential_spread(ops[0], _interior_probes(g, reach, cfg.numeric.n_probes, rng))
            res["spread"] = spread
        man.check("equilibrium_potential_spread", spread, "lt", tol(cfg, "equilibrium"))
        if g.surface.kind == "sphere":
            errs = sphere_spectrum_errors(rep, n_max=8, radius=g.surface.params["radius"])
            man.stages["spectrum"]["residuals"].update({f"oracle_{k}": v for k, v in errs.items()})
            man.check("sphere_S_eigenvalues", errs["S"], "lt", tol(cfg, "oracle"), "1/(2n+1), n <= 8")
            man.check("sphere_Sprime_eigenvalues", errs["Sp"], "lt", tol(cfg, "oracle"), "-1/(2(2n+1)), n <= 8")
    else:
        man.stages["spectrum"]["plus_half"] = rep.flags["plus_half"]
        man.check("plus_half_simple", rep.flags["plus_half"]["simple"], "true")
        T = thinshell_B_spectrum(rep, band=tol(cfg, "bulk_band"))
        write_csv(out / "spectrum_B.csv", SPECTRUM_COLUMNS, list(enumerate(np.sort(T["values"]))))
        man.files.append("spectrum_B.csv")
        man.stages["spectrum"]["residuals"].update(
            {"bulk_fraction": T["bulk_fraction"], "bulk_median": T["bulk_median"]})
        man.check("B_values_contained", T["contained"], "true", note="values in [-1, 0]")
        man.check("B_minus_one_simple", T["minus_one_simple"], "true")
        man.check("B_zero_simple", T["zero_simple"], "true")
        man.check("B_bulk_median", T["bulk_median"], "within", [-0.5, tol(cfg, "bulk_median_tol")])
        man.check("B_bulk_fraction", T["bulk_fraction"], "gt", 0.5)


# ---------------------------------------------------------------------------
# disk
# ---------------------------------------------------------------------------


def run_disk(cfg: RunConfig, man: RunManifest, out: Path, rng):
    nc = cfg.numeric
    with man.stage("zeros") as res:
        spec = mp.disk_spectrum(M=nc.disk_orders, J=nc.disk_zeros)
        res["k10"] = spec.k[0, 0]
        res["max_residual"] = float(np.abs(special.jv(np.arange(spec.M + 1)[:, None], spec.k)).max())
    man.check("k10", spec.k[0, 0], "within", [K10, tol(cfg, "k10")])
    man.check("zero_residual", man.stages["zeros"]["residuals"]["max_residual"], "lt", 1e-12)
    man.check("envelope_last_order", spec.c[-1], "lt", tol(cfg, "envelope_order"), "c_M")
    lo, hi = nc.disk_lambda_range
    lams = list(nc.lambdas) or list(np.logspace(np.log10(lo), np.log10(hi), max(nc.n_lambda, 4)))
    rows = []
    with man.stage("sweep") as res:
        for lam in lams:
            r = mp.disk_Dlambda(spec, float(lam), rtol=tol(cfg, "tail"))
            r["envelope"] = mp.disk_envelope(spec, float(lam))
            rows.append(r)
        res["max_tail_change"] = max(r["tail_change"] for r in rows)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS,
              _sweep_rows(rows, ("D", "D2", "envelope", "tail_change")))
    man.files.append("sweep.csv")
    _slope_checks(man, "D2", fit_slope([(r["lambda"], r["D2"]) for r in rows]), 1.0,
                  tol(cfg, "slope_tol"), tol(cfg, "r2_min"))
    man.fits["envelope2"] = fit_slope([(r["lambda"], r["envelope"] ** 2) for r in rows]).as_dict()
    man.check("tail_converged", max(r["tail_change"] for r in rows), "lt", tol(cfg, "tail"))
    D = [r["D"] for r in sorted(rows, key=lambda r: r["lambda"])]
    man.check("monotone_in_lambda", bool(np.all(np.diff(D) >= 0)), "true")
    counts = [spec.J // 8, spec.J // 4, spec.J // 2, spec.J]
    growth = {}
    for alpha in (0.2, 0.3):
        ps = mp.alpha_partial_sums(spec, alpha, counts)
        inc = np.diff(ps)
        growth[alpha] = float(inc[-1] / inc[-2])
    man.stages["sweep"]["residuals"].update({f"alpha_{a}_increment_ratio": g for a, g in growth.items()})
    man.check("alpha_0.2_increments_shrink", growth[0.2], "lt", 1.0)
    man.check("alpha_0.3_increments_grow", growth[0.3], "gt", 1.0)


# ---------------------------------------------------------------------------
# sphere (London ball)
# ---------------------------------------------------------------------------


def _sphere_setup(cfg: RunConfig):
    surfs = cfg.geometry.surfaces
    if len(surfs) != 1 or surfs[0].kind != "sphere":
        raise ConfigError("config.geometry: the sphere study needs exactly one sphere")
    items = cfg.sources.items
    if len(items) != 1 or items[0].type != "uniform":
        raise ConfigError("config.sources: the sphere study needs one uniform source")
    amp = items[0].amplitude
    if amp[0] != 0.0 or amp[1] != 0.0 or not amp[2] > 0.0:
        raise ConfigError("config.sources: the uniform field must point along +z")
    return float(surfs[0].params.get("radius", 1.0)), float(amp[2])


def run_sphere(cfg: RunConfig, man: RunManifest, out: Path, rng):
    R, B0 = _sphere_setup(cfg)
    nc = cfg.numeric
    with man.stage("bvp_oracle") as res:
        gap = mp.verify_against_bvp(R, B0, n_pairs=nc.bvp_pairs, seed=cfg.seed)
        res["max_gap"] = gap
    man.check("bvp_oracle", gap, "lt", tol(cfg, "bvp"), "closed form against collocation")
    with man.stage("study") as res:
        st = mp.sphere_convergence_study(R, B0, nc.lambda_over_R, n_grid=nc.n_u,
                                         r0=nc.r0 if nc.r0 is not None else nc.r0_fraction * R,
                                         richardson_points=nc.richardson_points)
        res.update({f"limit_{k}": v for k, v in st["limit_residuals"].items()})
        res.update({f"dipole_{k}": v for k, v in st["dipole"].items()})
    rows = st["rows"]
    keys = ("normal_trace", "tangential_diff", "collar_diff", "moment", "continuity")
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, _sweep_rows(rows, keys))
    man.files.append("sweep.csv")
    man.check("continuity", max(r["continuity"] for r in rows), "lt", tol(cfg, "continuity"))
    _slope_checks(man, "normal_trace", st["fits"]["normal_trace"], 1.0, tol(cfg, "slope_tol"),
                  tol(cfg, "r2_min"))
    tail = rows[-4:]
    man.fits["normal_trace_last4"] = fit_slope([(r["lambda"], r["normal_trace"]) for r in tail]).as_dict()
    man.fits["tangential_diff"] = st["fits"]["tangential_diff"].as_dict()
    man.fits["collar_diff"] = st["fits"]["collar_diff"].as_dict()
    srt = sorted(rows, key=lambda r: r["lambda"])
    man.check("normal_trace_monotone", srt[0]["normal_trace"] < srt[1]["normal_trace"], "true",
              "smallest lambda row below the next")
    man.check("collar_diff_slope", st["fits"]["collar_diff"].slope, "ge", tol(cfg, "collar_slope_min"))
    man.check("dipole_extrapolation", st["dipole"]["difference"], "lt", tol(cfg, "dipole"),
              "Richardson limit against the limiting solver")


# ---------------------------------------------------------------------------
# convergence (quadrature self-convergence)
# ---------------------------------------------------------------------------


def run_convergence(cfg: RunConfig, man: RunManifest, out: Path, rng):
    ns = list(cfg.numeric.n_list) or [16, 24, 32, 48]
    sc = cfg.geometry.surfaces
    if len(sc) != 1:
        raise ConfigError("config.geometry: the convergence study needs exactly one surface")
    rows = []
    for n in ns:
        grid = make_grids(cfg, n, n)[0]
        with man.stage(f"n{n}") as res:
            ops = make_operators(cfg, grid)
            target = 0.5 if sc[0].flip else -0.5
            res["gauss"] = float(np.abs(ops.D @ np.ones(grid.n) - target).max())
            res["calderon"] = calderon_residual(ops)
        rows.append({"n": n, **man.stages[f"n{n}"]["residuals"]})
    write_csv(out / "convergence.csv", ("n", "metric_name", "value"),
              [(r["n"], k, r[k]) for r in rows for k in ("gauss", "calderon")])
    man.files.append("convergence.csv")
    man.check("gauss_finest", rows[-1]["gauss"], "lt", tol(cfg, "gauss"))
    man.check("calderon_finest", rows[-1]["calderon"], "lt", tol(cfg, "calderon"))


RUNNERS = {
    "validate": run_validate,
    "solve": run_solve,
    "betalayer": run_betalayer,
    "spectra": run_spectra,
    "disk": run_disk,
    "sphere": run_sphere,
    "convergence": run_convergence,
}
