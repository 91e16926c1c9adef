"""Run named presets and print one summary line per preset.

    python scripts/run_presets.py                 # the fast sphere/disk presets
    python scripts/run_presets.py --all           # every preset (torus runs take minutes)
    python scripts/run_presets.py spectra_torus thinshell_b1 --out runs
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from londonlimit.harness import FAST, PRESETS, parse_config, run


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="preset names (default: the fast set)")
    p.add_argument("--all", action="store_true", help="run every preset")
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    names = sorted(PRESETS) if args.all else (args.names or list(FAST))
    unknown = [n for n in names if n not in PRESETS]
    if unknown:
        p.error(f"unknown preset(s): {', '.join(unknown)}")
    ok = True
    for name in names:
        t = time.perf_counter()
        man = run(parse_config(PRESETS[name]), args.out / name, threads=args.threads)
        failed = [c.name for c in man.checks if not c.passed]
        status = "PASS" if man.passed else "FAIL"
        detail = man.error or (", ".join(failed) if failed else "")
        print(f"{status}  {name:22s} {time.perf_counter() - t:7.1f} s  {detail}")
        ok &= man.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
