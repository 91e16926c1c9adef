"""Command line entry point and the config-driven ``run``."""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .. import __version__
from .config import EXPERIMENTS, ConfigError, RunConfig, load_config, parse_config
from .manifest import RunManifest
from .presets import PRESETS
from .stages import RUNNERS, check_tolerance_names

THREADS_ENV = "LONDONLIMIT_THREADS"

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA = 0, 1, 2


def resolve_threads(cli_value: int | None) -> int | None:
    """``--threads`` wins, then the environment variable, then the BLAS default."""
    if cli_value is not None:
        return cli_value
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be positive")
        return n
    return None


def available_cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def run(cfg: RunConfig, out_dir, threads: int | None = None) -> RunManifest:
    """Execute one experiment; always writes ``manifest.json`` to ``out_dir``.

    A thread request above the available CPU count is clamped: OpenBLAS
    builds can crash when asked for more threads than they initialised.
    """
    check_tolerance_names(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    requested = threads
    if threads is not None:
        threads = max(1, min(threads, available_cpus()))
    man = RunManifest(cfg.experiment, cfg.to_dict(), __version__, cfg.seed, threads)
    man.stages["threads"] = {"requested": requested, "effective": threads, "residuals": {}}
    rng = np.random.default_rng(cfg.seed)
    try:
        with threadpool_limits(limits=threads):
            RUNNERS[cfg.experiment](cfg, man, out, rng)
    except ConfigError:
        raise
    except Exception as exc:  # numerical failure: keep the partial manifest
        man.error = f"{type(exc).__name__}: {exc}"
        man.stages.setdefault("traceback", {"text": traceback.format_exc(), "residuals": {}})
    man.write(out)
    return man


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="londonlimit",
                                description="Limiting Meissner-state solves and checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run a {name} experiment")
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="YAML run configuration")
        src.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
        s.add_argument("--out", type=Path, required=True, help="output directory")
        s.add_argument("--threads", type=int, default=None, help=f"BLAS threads (else ${THREADS_ENV})")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    sub.add_parser("presets", help="list built-in configurations")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "presets":
        for name, data in PRESETS.items():
            print(f"{name:22s} {data['experiment']}")
        return EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else parse_config(PRESETS[args.preset])
        if cfg.experiment != args.command:
            raise ConfigError(f"config describes a {cfg.experiment!r} run, not {args.command!r}")
        if args.seed is not None:
            cfg = parse_config({**cfg.to_dict(), "seed": args.seed})
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        threads = resolve_threads(args.threads)
        man = run(cfg, args.out, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    for c in man.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name} = {c.value} ({c.op} {c.threshold})")
    if man.error:
        print(f"ERROR {man.error}", file=sys.stderr)
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    return EXIT_OK if man.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
