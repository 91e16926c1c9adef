"""Run manifests, acceptance checks and CSV writers."""

from __future__ import annotations

import csv
import json
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

OPS = ("lt", "le", "gt", "ge", "within", "true")


@dataclass
class Check:
    """One pass/fail decision that can be re-evaluated from its own record.

    ``op`` is one of ``lt``, ``le``, ``gt``, ``ge`` (against a scalar
    ``threshold``), ``within`` (``threshold = [target, tol]``) or ``true``.
    """

    name: str
    value: float | bool | None
    op: str
    threshold: float | list | None = None
    note: str = ""
    passed: bool = False

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown check op {self.op!r}")
        self.passed = evaluate_check(self.value, self.op, self.threshold)


def evaluate_check(value, op, threshold) -> bool:
    if op == "true":
        return isinstance(value, (bool, np.bool_)) and bool(value)
    if value is None or not isinstance(value, (int, float)) or isinstance(value, bool):
        return False
    v = float(value)
    if not math.isfinite(v):
        return False
    if op == "lt":
        return v < threshold
    if op == "le":
        return v <= threshold
    if op == "gt":
        return v > threshold
    if op == "ge":
        return v >= threshold
    target, tol = threshold
    return abs(v - target) <= tol


@dataclass
class RunManifest:
    experiment: str
    config: dict
    version: str
    seed: int
    threads: int | None
    stages: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def check(self, name, value, op, threshold=None, note="") -> Check:
        c = Check(name, _scalar(value), op, threshold, note)
        self.checks.append(c)
        return c

    @contextmanager
    def stage(self, name: str):
        """Time a stage; the body may fill the yielded residual dict."""
        rec = {"residuals": {}}
        t = time.perf_counter()
        try:
            yield rec["residuals"]
        finally:
            rec["wall_clock"] = time.perf_counter() - t
            rec["residuals"] = {k: _scalar(v) for k, v in rec["residuals"].items()}
            self.stages[name] = rec

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "version": self.version,
            "seed": self.seed,
            "threads": self.threads,
            "config": self.config,
            "stages": self.stages,
            "checks": [asdict(c) for c in self.checks],
            "fits": self.fits,
            "files": self.files,
            "error": self.error,
            "passed": self.passed,
        }

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n")
        return path


def _scalar(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def reevaluate(manifest: dict) -> dict:
    """Pass/fail per check recomputed from the stored values alone."""
    out = {c["name"]: evaluate_check(c["value"], c["op"], c["threshold"]) for c in manifest["checks"]}
    out["__all__"] = manifest.get("error") is None and all(out.values())
    return out


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("u", "v", "x", "y", "z", "Bx", "By", "Bz", "Bn", "|Btan|", "gamma_u", "gamma_v")
SWEEP_COLUMNS = ("lambda", "metric_name", "value")
SPECTRUM_COLUMNS = ("index", "eigenvalue")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            if len(r) != len(columns):
                raise ValueError(f"row has {len(r)} entries, header has {len(columns)}")
            w.writerow([_fmt(x) for x in r])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
