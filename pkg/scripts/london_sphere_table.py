"""Finite-lambda London ball against the limiting solution.

Prints, per ``lambda / R``, the normal-trace norm with its local log-log
slope, the tangential trace and collar differences, and the dipole moment,
followed by the Richardson-extrapolated moment.

    python scripts/london_sphere_table.py --ratios 0.5 0.25 0.125 0.0625 0.03125 0.015625
"""

from __future__ import annotations

import argparse

import numpy as np

from londonlimit.model_problems import sphere_convergence_study


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--ratios", nargs="+", type=float,
                   default=[0.5 ** k for k in range(1, 9)])
    p.add_argument("--n-grid", type=int, default=32)
    p.add_argument("--r0", type=float, default=0.4)
    args = p.parse_args(argv)
    st = sphere_convergence_study(1.0, 1.0, args.ratios, n_grid=args.n_grid, r0=args.r0)
    rows = st["rows"]
    print(f"{'lam/R':>10s} {'|B.n|':>12s} {'local':>7s} {'tan diff':>12s} {'collar diff':>12s} {'moment':>14s}")
    prev = None
    for r in rows:
        local = "" if prev is None else f"{np.log(r['normal_trace'] / prev['normal_trace']) / np.log(r['lambda'] / prev['lambda']):7.3f}"
        print(f"{r['lambda']:10.6f} {r['normal_trace']:12.5e} {local:>7s} {r['tangential_diff']:12.5e}"
              f" {r['collar_diff']:12.5e} {r['moment']:14.10f}")
        prev = r
    for k, f in st["fits"].items():
        print(f"fit {k:16s} slope {f.slope:.4f}  r2 {f.r2:.4f}")
    d = st["dipole"]
    print(f"moment: extrapolated {d['extrapolated']:.12f}  limiting solver {d['limit_solver']:.12f}"
          f"  difference {d['difference']:.2e}")


if __name__ == "__main__":
    main()
