import json
import os
import subprocess
import sys

import pytest

from lphom.cli import main


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_covering_command_and_determinism(tmp_path):
    cfg = write(tmp_path, {"domain": {"lower": [0], "upper": [1]}, "epsilon": 0.25, "r": 0.5, "seed": 1})
    assert main(["covering", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["covering", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "covering.json").read_bytes()
    assert a == (tmp_path / "b" / "covering.json").read_bytes()
    assert len(json.loads(a)["cubes"]) == 2


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, {"r": 1.2})
    assert main(["covering", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "$.r" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["covering", "--config", str(tmp_path / "missing.json")]) == 2


def test_bad_threads(tmp_path):
    cfg = write(tmp_path, {})
    assert main(["covering", "--config", cfg, "--threads", "0"]) == 2


def test_dry_run_writes_nothing(tmp_path, capsys):
    cfg = write(tmp_path, {"epsilon": 0.25, "r": 0.5, "domain": {"lower": [0], "upper": [1]}})
    out = tmp_path / "dry"
    assert main(["covering", "--config", cfg, "--out", str(out), "--dry-run"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["outputs"] == ["covering.json"]
    assert not out.exists()


def test_microstructure_command(tmp_path):
    cfg = write(tmp_path, {"domain": {"lower": [0, 0], "upper": [1, 1]}, "epsilon": 0.125, "r": 0.5,
                           "microstructure": {"variant": "perforation", "radius": 0.3},
                           "grid": {"voxels": [16, 16]}})
    assert main(["microstructure", "--config", cfg, "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "voxels.json").read_text())
    assert meta["shape"] == [16, 16]
    assert (tmp_path / "voxels.raw").stat().st_size == 256


def test_homogenize_and_macro(tmp_path):
    cfg = write(tmp_path, {"grid": {"cell_n": 8, "samples": 3, "macro_n": 3},
                           "microstructure": {"variant": "plywood_lp", "a": 0.25},
                           "macro": {"boundary": "zero"}})
    assert main(["homogenize", "--config", cfg, "--out", str(tmp_path)]) == 0
    flags = json.loads((tmp_path / "homogenize_flags.json").read_text())
    assert all(flags["flags"].values())
    cfg2 = write(tmp_path, {"grid": {"macro_n": 3},
                            "macro": {"boundary": "linear", "tensor_file": str(tmp_path / "tensors.json")}},
                 "macro.json")
    assert main(["macro", "--config", cfg2, "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "solution.bin").exists()
    assert (tmp_path / "m" / "line_x3.csv").exists()


def test_macro_patch_flag(tmp_path):
    cfg = write(tmp_path, {"grid": {"macro_n": 3}, "macro": {"boundary": "linear"}})
    assert main(["macro", "--config", cfg, "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "macro_flags.json").read_text())
    assert data["flags"]["patch_test"]


def test_converge_command_with_plot_data(tmp_path, capsys):
    cfg = write(tmp_path, {"schedule": [1 / 8, 1 / 16, 1 / 32], "seed": 3,
                           "study": {"kind": "lp_np_trend", "params": {"r_values": [0.8], "control": False},
                                     "resolutions": {"samples": 20000}}})
    code = main(["converge", "--config", cfg, "--out", str(tmp_path), "--emit-plot-data"])
    assert code in (0, 1)
    out = capsys.readouterr().out
    assert "lp_np_trend:r=0.8:positive_slope" in out
    assert (tmp_path / "lp_np_trend.json").exists() and (tmp_path / "plot_data").is_dir()
    assert code == (0 if json.loads((tmp_path / "lp_np_trend.json").read_text())["passed"] else 1)


def test_console_entry_subprocess(tmp_path):
    cfg = write(tmp_path, {"domain": {"lower": [0], "upper": [1]}, "epsilon": 0.25, "r": 0.5})
    env = dict(os.environ, LPHOM_LOG="info")
    res = subprocess.run([sys.executable, "-m", "lphom.cli", "covering", "--config", cfg, "--out",
                          str(tmp_path / "s")], capture_output=True, text=True, env=env)
    assert res.returncode == 0
    assert "INFO" in res.stderr
