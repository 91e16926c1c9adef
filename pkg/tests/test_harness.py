import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from londonlimit.fitting import fit_slope
from londonlimit.harness import (
    PRESETS,
    Check,
    ConfigError,
    load_config,
    load_manifest,
    main,
    parse_config,
    reevaluate,
    resolve_threads,
    run,
)
from londonlimit.harness.config import dump_config
from londonlimit.harness.manifest import TRACE_COLUMNS, read_csv, write_csv

ROOT = Path(__file__).resolve().parents[1]

SMALL_DISK = {"experiment": "disk",
              "numeric": {"disk_orders": 12, "disk_zeros": 100, "n_lambda": 4,
                          "disk_lambda_range": [1e-2, 1e-1]}}
SMALL_VALIDATE = {"experiment": "validate", "geometry": {"surfaces": [{"kind": "sphere"}]},
                  "numeric": {"n_u": 16, "n_v": 16}}


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


# -- slope fitting ---------------------------------------------------------------


def test_fit_slope_exact_power_laws():
    lam = 0.5 ** np.arange(6)
    f = fit_slope(zip(lam, 3.0 * lam ** 2))
    assert f.slope == pytest.approx(2.0, abs=1e-14)
    assert f.intercept == pytest.approx(np.log(3.0), abs=1e-14)
    assert f.r2 == pytest.approx(1.0)
    assert f.within(2.0, 1e-9)
    assert not f.within(1.0, 0.5)
    assert fit_slope(zip(lam, 5.0 * lam ** -0.5)).slope == pytest.approx(-0.5, abs=1e-14)


def test_fit_slope_rejects_bad_data():
    with pytest.raises(ValueError):
        fit_slope([(1.0, 1.0), (0.5, 0.5), (0.25, 0.25)])
    with pytest.raises(ValueError):
        fit_slope([(1.0, 1.0), (0.5, 0.0), (0.25, 0.25), (0.1, 0.1)])
    with pytest.raises(ValueError):
        fit_slope([(1.0, 1.0), (0.5, np.nan), (0.25, 0.25), (0.1, 0.1)])


# -- configuration -----------------------------------------------------------------


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"experiment": "disk", "numeric": {"n_lamda": 4}})
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"experiment": "disk", "colour": "red"})


@pytest.mark.parametrize("bad", [
    {"experiment": "dance"},
    {"experiment": "disk", "numeric": {"n_u": "32"}},
    {"experiment": "disk", "numeric": {"n_u": 32.5}},
    {"experiment": "disk", "numeric": {"jump_check": 1}},
    {"experiment": "solve", "geometry": {"surfaces": [{"kind": "cube"}]}},
    {"experiment": "solve", "sources": {"items": [{"type": "dipole", "location": [0, 0, 3]}]}},
    {"experiment": "solve", "sources": {"items": [{"type": "uniform", "amplitude": [0, 1]}]}},
    {"experiment": "solve", "reference": "nothing"},
    {"experiment": "disk", "numeric": {"disk_lambda_range": [0.1, 0.01]}},
    {"experiment": "disk", "numeric": {"r0_fraction": 0.6}},
    {"seed": 1},
])
def test_schema_violations(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_config_roundtrip():
    for data in PRESETS.values():
        cfg = parse_config(data)
        assert parse_config(yaml.safe_load(dump_config(cfg))) == cfg


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_config_files_match_presets(name):
    assert load_config(ROOT / "configs" / f"{name}.yaml") == parse_config(PRESETS[name])


def test_unknown_tolerance_name_is_a_schema_error(tmp_path):
    cfg = parse_config({**SMALL_DISK, "tolerances": {"no_such_check": 1.0}})
    with pytest.raises(ConfigError):
        run(cfg, tmp_path)
    assert not (tmp_path / "manifest.json").exists()


# -- CLI exit codes ----------------------------------------------------------------


def test_cli_schema_error_exit_code(tmp_path):
    path = write_yaml(tmp_path / "bad.yaml", {"experiment": "disk", "numerics": {}})
    assert main(["disk", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert main(["solve", "--preset", "disk_exp", "--out", str(tmp_path / "out")]) == 2
    (tmp_path / "broken.yaml").write_text("experiment: [disk\n")
    assert main(["disk", "--config", str(tmp_path / "broken.yaml"), "--out", str(tmp_path / "o")]) == 2


def test_cli_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in PRESETS)


def test_cli_pass_and_fail(tmp_path):
    path = write_yaml(tmp_path / "ok.yaml", SMALL_VALIDATE)
    assert main(["validate", "--config", str(path), "--out", str(tmp_path / "ok"), "--threads", "1"]) == 0
    strict = write_yaml(tmp_path / "strict.yaml", {**SMALL_VALIDATE, "tolerances": {"gauss": 1e-30}})
    assert main(["validate", "--config", str(strict), "--out", str(tmp_path / "strict")]) == 1
    man = load_manifest(tmp_path / "strict" / "manifest.json")
    assert not man["passed"]
    assert [c["name"] for c in man["checks"] if not c["passed"]] == ["surface0_gauss"]


def test_numerical_failure_still_writes_manifest(tmp_path):
    # a dipole at the centre of the ball is not an outer source
    data = {"experiment": "solve", "geometry": {"surfaces": [{"kind": "sphere"}]},
            "sources": {"items": [{"type": "dipole", "location": [0, 0, 0], "moment": [0, 0, 1]}]},
            "numeric": {"n_u": 16, "n_v": 16}}
    path = write_yaml(tmp_path / "c.yaml", data)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    man = load_manifest(tmp_path / "o" / "manifest.json")
    assert man["error"].startswith("RegionError")
    assert man["passed"] is False


# -- manifests, CSV, determinism ---------------------------------------------------


def test_manifest_reevaluation_matches_live_run(tmp_path):
    man = run(parse_config(SMALL_DISK), tmp_path, threads=1)
    stored = load_manifest(tmp_path / "manifest.json")
    again = reevaluate(stored)
    assert again["__all__"] == man.passed == stored["passed"]
    for c in man.checks:
        assert again[c.name] == c.passed
    assert stored["threads"] == 1
    assert stored["config"] == parse_config(SMALL_DISK).to_dict()
    assert "wall_clock" in stored["stages"]["sweep"]
    assert set(stored["files"]) == {"sweep.csv"}


def test_reevaluation_detects_edited_values():
    m = {"checks": [{"name": "a", "value": 0.5, "op": "lt", "threshold": 1.0},
                    {"name": "b", "value": [2.0], "op": "lt", "threshold": 1.0}], "error": None}
    out = reevaluate(m)
    assert out["a"] and not out["b"] and not out["__all__"]


def test_check_ops():
    assert Check("x", 0.95, "within", [1.0, 0.1]).passed
    assert not Check("x", float("nan"), "lt", 1.0).passed
    assert not Check("x", None, "gt", 0.0).passed
    assert Check("x", True, "true").passed
    assert not Check("x", 1, "true").passed
    with pytest.raises(ValueError):
        Check("x", 1.0, "approx", 1.0)


def test_csv_roundtrip_is_exact(tmp_path, rng):
    vals = rng.normal(size=(5, len(TRACE_COLUMNS)))
    write_csv(tmp_path / "t.csv", TRACE_COLUMNS, vals)
    header, rows = read_csv(tmp_path / "t.csv")
    assert tuple(header) == TRACE_COLUMNS
    assert np.array_equal(np.array(rows, dtype=float), vals)
    with pytest.raises(ValueError):
        write_csv(tmp_path / "t.csv", ("a", "b"), [(1.0,)])


def test_outputs_are_deterministic(tmp_path):
    cfg = parse_config(SMALL_DISK)
    run(cfg, tmp_path / "a", threads=1)
    run(cfg, tmp_path / "b", threads=1)
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    header, rows = read_csv(tmp_path / "a" / "sweep.csv")
    assert header == ["lambda", "metric_name", "value"]
    assert {r[1] for r in rows} == {"D", "D2", "envelope", "tail_change"}


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv("LONDONLIMIT_THREADS", raising=False)
    assert resolve_threads(None) is None
    monkeypatch.setenv("LONDONLIMIT_THREADS", "2")
    assert resolve_threads(None) == 2
    assert resolve_threads(3) == 3
    monkeypatch.setenv("LONDONLIMIT_THREADS", "two")
    with pytest.raises(ConfigError):
        resolve_threads(None)


def test_thread_request_is_clamped(tmp_path):
    man = run(parse_config(SMALL_VALIDATE), tmp_path, threads=4096)
    rec = json.loads((tmp_path / "manifest.json").read_text())["stages"]["threads"]
    assert rec["requested"] == 4096
    assert 1 <= rec["effective"] < 4096
    assert man.passed


def test_seed_override(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", SMALL_DISK)
    assert main(["disk", "--config", str(path), "--out", str(tmp_path / "o"), "--seed", "7"]) == 0
    assert load_manifest(tmp_path / "o" / "manifest.json")["seed"] == 7
