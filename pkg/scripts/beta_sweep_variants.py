"""Boundary-layer sweep on torus_rev(2, 1) for two choices of the largest lambda.

``lambda_max / r0 = 0.25`` is the default preset; ``1.0`` starts the dyadic
sweep at the collar half-depth itself, where the two largest values are not
yet in the thin-layer regime.  Prints the fitted slopes for both.

    python scripts/beta_sweep_variants.py --out runs/beta_variants
"""

from __future__ import annotations

import argparse
import copy
from pathlib import Path

from londonlimit.harness import PRESETS, parse_config, run

KEYS = ("L2", "L1", "residual_L2", "sheet_error", "pairing_difference")


def sweep(ratio: float, out: Path, threads: int = 1) -> dict:
    data = copy.deepcopy(PRESETS["beta_sweep_torus"])
    data["numeric"]["lambda_max_over_r0"] = ratio
    man = run(parse_config(data), out, threads=threads)
    if man.error:
        raise RuntimeError(man.error)
    return man.fits


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--ratios", nargs="+", type=float, default=[0.25, 1.0])
    p.add_argument("--out", type=Path, default=Path("runs/beta_variants"))
    args = p.parse_args(argv)
    print("lambda_max/r0  " + "  ".join(f"{k:>18s}" for k in KEYS))
    for ratio in args.ratios:
        fits = sweep(ratio, args.out / f"ratio_{ratio:g}")
        print(f"{ratio:13g}  " + "  ".join(f"{fits[k]['slope']:8.4f} (r2 {fits[k]['r2']:.3f})" for k in KEYS))


if __name__ == "__main__":
    main()
