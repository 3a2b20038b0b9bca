"""Config validation and CLI orchestration (determinism, manifests, errors)."""

import json
from pathlib import Path

import numpy as np
import pytest

from nlsblow.cli import main
from nlsblow.config import ConfigError, parse_config


def test_minimal_config_defaults():
    cfg = parse_config("kmodel:\n  hessian: [[-1.0, 0.0], [0.0, -1.0]]\n")
    assert cfg["kmodel"]["k1"] == 0.5
    assert cfg["radial_grid"]["n"] == 8192


def test_round_trip_stability():
    cfg = parse_config("kmodel:\n  k1: 0.7\nseed: 3\n")
    again = parse_config(cfg.serialize())
    assert again.data == cfg.data
    assert again.serialize() == cfg.serialize()


def test_rejects_positive_eigenvalue():
    with pytest.raises(ConfigError) as err:
        parse_config("kmodel:\n  hessian: [[0.3, 0.0], [0.0, -1.0]]\n")
    assert any("hessian not negative definite" in msg for msg in err.value.violations)


def test_rejects_k1_out_of_bounds():
    with pytest.raises(ConfigError) as err:
        parse_config("kmodel:\n  k1: 1.5\n")
    assert any("k1" in v and "Assumption (H)" in v for v in err.value.violations)


def test_collects_all_violations():
    bad = ("kmodel:\n  k1: 1.5\n  hessian: [[0.3, 0.0], [0.0, -1.0]]\n"
           "grid2d:\n  n: 1000\nseed: 1\n")
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert len(err.value.violations) >= 3


def test_unknown_key_is_path_addressed():
    with pytest.raises(ConfigError) as err:
        parse_config("sim:\n  timestep: 0.1\n")
    assert any(v.startswith("sim.timestep") for v in err.value.violations)


def test_verify_cli(tmp_path):
    rc = main(["verify", "--out", str(tmp_path / "v")])
    assert rc == 0
    report = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert report["pass"] is True
    manifest = json.loads((tmp_path / "v" / "manifest.json").read_text())
    assert "verify.json" in manifest["files"]


def test_config_error_produces_record(tmp_path):
    cfgfile = tmp_path / "bad.yaml"
    cfgfile.write_text("kmodel:\n  k1: 2.0\n")
    rc = main(["ground-state", "--config", str(cfgfile), "--out", str(tmp_path / "g")])
    assert rc == 2
    rec = json.loads((tmp_path / "g" / "error.json").read_text())
    assert rec["error"] == "ConfigError"


def test_runtime_error_produces_record(tmp_path):
    cfgfile = tmp_path / "cfg.yaml"
    # energy below the admissible threshold: EnergyConditionViolated downstream
    cfgfile.write_text("energy:\n  E0: -10.0\n  C0: null\n")
    rc = main(["profile", "--config", str(cfgfile), "--out", str(tmp_path / "p")])
    assert rc == 1
    rec = json.loads((tmp_path / "p" / "error.json").read_text())
    assert rec["error"] == "EnergyConditionViolated"


def test_ode_cli_and_determinism(tmp_path):
    cfgfile = tmp_path / "cfg.yaml"
    cfgfile.write_text("ode:\n  t1: -0.2\n  s_end: 300.0\nseed: 7\n")
    rc = main(["ode", "--config", str(cfgfile), "--out", str(tmp_path / "a")])
    assert rc == 0
    rc = main(["ode", "--config", str(cfgfile), "--out", str(tmp_path / "b")])
    assert rc == 0
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert a == b
    header = a.decode().splitlines()[0].split(",")
    assert header == ["s", "t", "b", "lambda", "beta1", "beta2",
                      "alpha1", "alpha2", "gamma", "b_over_lambda"]


def test_appendix_b_cli(tmp_path):
    rc = main(["appendix-b", "--out", str(tmp_path / "ab")])
    assert rc == 0
    rep = json.loads((tmp_path / "ab" / "appendix_b.json").read_text())
    for key, entry in rep.items():
        assert entry["basis_residual"] < 1e-8
        assert entry["voc_vs_ode"] < 1e-8
        assert np.isfinite(entry["max_bound_ratio"])


def test_profile_cli_flags(tmp_path):
    rc = main(["profile", "--out", str(tmp_path / "p"), "--hxx", "-0.3",
               "--hyy", "-0.25", "--hxy", "0.02", "--k1", "0.6",
               "--lam-scan", "0.02", "0.1", "4"])
    assert rc == 0
    consts = json.loads((tmp_path / "p" / "constants.json").read_text())
    assert consts["a1"] > 0
    scan = (tmp_path / "p" / "residual_scan.csv").read_text().splitlines()
    assert scan[0] == "lambda,normPsi_L2w,slope_local"
    assert len(scan) == 5
    last_slope = float(scan[-1].split(",")[-1])
    assert 4.0 < last_slope < 6.0


def test_simulate_then_analyze(tmp_path):
    cfgfile = tmp_path / "cfg.yaml"
    cfgfile.write_text(
        "grid2d:\n  L: 6.0\n  n: 512\n"
        "sim:\n  t_start: -0.3\n  lam_stop: 0.24\n  c_dt: 0.03\n"
        "  snapshot_stride: 8\n  series_stride: 4\n  splitting_order: 4\n"
        "energy:\n  C0: 1.0\n"
        "profile:\n  eta_star: 0.55\n")
    rc = main(["simulate", "--config", str(cfgfile), "--out", str(tmp_path / "s")])
    assert rc == 0
    series = (tmp_path / "s" / "series.csv").read_text().splitlines()
    assert series[0].split(",") == ["t", "mass", "energy", "momentum_x",
                                    "momentum_y", "grad_norm", "lambda_proxy"]
    snaps = sorted((tmp_path / "s" / "snapshots").glob("snap_*.bin"))
    assert len(snaps) >= 2
    rc = main(["analyze", "--config", str(cfgfile), "--out", str(tmp_path / "s")])
    assert rc == 0
    params = (tmp_path / "s" / "params.csv").read_text().splitlines()
    assert params[0].split(",")[:4] == ["t", "b", "lambda", "alpha1"]
    assert len(params) >= 3
    # the analyzed window covers the run window
    t_first = float(params[1].split(",")[0])
    t_last = float(params[-1].split(",")[0])
    t_series = [float(r.split(",")[0]) for r in series[1:]]
    assert t_first <= t_series[0] + 1e-12
    assert t_last >= t_series[-1] - 0.05
