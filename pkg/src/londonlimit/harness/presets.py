"""Named configurations, one per acceptance check family.

``configs/<name>.yaml`` in the repository holds the same data in file form.
"""

from __future__ import annotations

SPHERE = {"kind": "sphere", "params": {"radius": 1.0}}
TORUS = {"kind": "torus_rev", "params": {"R": 2.0, "r": 1.0}}
INNER_TORUS = {"kind": "torus_rev", "params": {"R": 2.0, "r": 0.5}}
TWISTED = {"kind": "twisted_torus"}
UNIFORM_Z = {"type": "uniform", "amplitude": [0.0, 0.0, 1.0]}

PRESETS: dict[str, dict] = {
    "validate_sphere64": {
        "experiment": "validate",
        "geometry": {"surfaces": [SPHERE]},
        "numeric": {"n_u": 64, "n_v": 64},
    },
    "validate_torus48": {
        "experiment": "validate",
        "geometry": {"surfaces": [TORUS]},
        "numeric": {"n_u": 48, "n_v": 48},
        "tolerances": {"calderon": 1e-4},
    },
    "spectra_sphere": {
        "experiment": "spectra",
        "geometry": {"surfaces": [SPHERE]},
        "numeric": {"n_u": 32, "n_v": 32},
    },
    "spectra_torus": {
        "experiment": "spectra",
        "geometry": {"surfaces": [TORUS]},
        "numeric": {"n_u": 32, "n_v": 32},
    },
    "spectra_nested": {
        "experiment": "spectra",
        "geometry": {"surfaces": [TORUS, {**INNER_TORUS, "flip": True}]},
        "numeric": {"n_u": 32, "n_v": 32, "check_nonsymmetric": False},
    },
    "spectra_twisted48": {
        "experiment": "spectra",
        "geometry": {"surfaces": [TWISTED]},
        "numeric": {"n_u": 48, "n_v": 48, "check_nonsymmetric": False},
    },
    "thinshell_b1": {
        "experiment": "solve",
        "geometry": {"surfaces": [TORUS, INNER_TORUS]},
        "flux": {"a": [0.0], "b": [1.0]},
        "numeric": {"n_u": 48, "n_v": 48},
        "reference": "axis_field",
    },
    "solve_sphere_uniform": {
        "experiment": "solve",
        "geometry": {"surfaces": [SPHERE]},
        "sources": {"region": "outer", "items": [UNIFORM_Z]},
        "numeric": {"n_u": 32, "n_v": 32},
        "reference": "sphere_uniform",
    },
    "solve_torus_a1": {
        "experiment": "solve",
        "geometry": {"surfaces": [TORUS]},
        "flux": {"a": [1.0]},
        "numeric": {"n_u": 32, "n_v": 32},
    },
    "solve_torus_loop": {
        "experiment": "solve",
        "geometry": {"surfaces": [TORUS]},
        "sources": {"region": "outer", "items": [
            {"type": "loop", "center": [0.0, 0.0, 2.5], "radius": 2.0, "axis": [0.0, 0.0, 1.0],
             "current": 1.0}]},
        "flux": {"a": [0.5]},
        "numeric": {"n_u": 32, "n_v": 32},
    },
    "solve_twisted_a1": {
        "experiment": "solve",
        "geometry": {"surfaces": [TWISTED]},
        "flux": {"a": [1.0]},
        "numeric": {"n_u": 48, "n_v": 48},
    },
    "beta_sweep_torus": {
        "experiment": "betalayer",
        "geometry": {"surfaces": [TORUS]},
        "flux": {"a": [1.0]},
        "numeric": {"n_u": 32, "n_v": 32, "r0": 0.4, "lambda_max_over_r0": 0.25, "n_lambda": 7},
    },
    "london_sphere": {
        "experiment": "sphere",
        "geometry": {"surfaces": [SPHERE]},
        "sources": {"region": "outer", "items": [UNIFORM_Z]},
        "numeric": {"n_u": 32, "n_v": 32, "r0": 0.4},
    },
    "disk_exp": {
        "experiment": "disk",
        "numeric": {"n_lambda": 9, "disk_lambda_range": [1e-3, 1e-1]},
    },
    "convergence_torus": {
        "experiment": "convergence",
        "geometry": {"surfaces": [TORUS]},
        "numeric": {"n_list": [16, 24, 32, 48]},
    },
}

# Presets cheap enough for every test run; the rest take minutes.
FAST = ("validate_sphere64", "spectra_sphere", "solve_sphere_uniform", "london_sphere", "disk_exp")
