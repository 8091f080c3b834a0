import json
import os
import subprocess
import sys

import pytest

from hybridkp.cli import main
from hybridkp.harness import ExperimentConfig, parse_csv, run_experiment

FAST = ["--categories", "car,bottle", "--instances", "4"]


def stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_run_writes_reports(tmp_path, capsys):
    assert main(["run", *FAST, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "MedErr" in out and "mean" in out
    for name in ("rows.csv", "summary.csv", "summary.txt"):
        assert (tmp_path / name).exists()
    assert len(parse_csv(tmp_path / "rows.csv")) == 8


def test_run_matches_library(tmp_path):
    assert main(["run", *FAST, "--canview-noise", "0.1", "--seed", "4", "--format", "csv", "--out", str(tmp_path)]) == 0
    cfg = ExperimentConfig(categories=("car", "bottle"), instances_per_category=4, canview_noise=0.1, seed=4)
    assert parse_csv(tmp_path / "summary.csv") == run_experiment(cfg).summary
    assert not (tmp_path / "summary.txt").exists()


def test_usage_error(capsys):
    assert main(["run", "--instances", "many"]) == 2
    assert stderr_json(capsys)["error"] == "usage"
    assert main([]) == 2
    assert main(["ablate", *FAST, "--modes", "full,bogus"]) == 2


def test_runtime_error_is_machine_readable(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    line = stderr_json(capsys)
    assert line["error"] == "ValueError" and "colour" in line["message"]
    assert main(["score", str(tmp_path / "missing")]) == 1
    assert stderr_json(capsys)["error"] == "FileNotFoundError"


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"categories": ["sofa"], "instances_per_category": 3, "elevation_range_deg": [0, 30], "seed": 9}))
    assert main(["run", "--config", str(cfg), "--instances", "2", "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "summary.txt").read_text()
    echoed = json.loads(text.splitlines()[0].removeprefix("# config: "))
    assert echoed["instances_per_category"] == 2 and echoed["seed"] == 9
    assert echoed["elevation_range_deg"] == pytest.approx([0, 30])


def test_angle_flags_in_degrees(tmp_path):
    assert main(["run", *FAST, "--azimuth-range", "10", "20", "--out", str(tmp_path)]) == 0
    rows = parse_csv(tmp_path / "rows.csv")
    assert all(10 <= r["azimuth_deg"] <= 20 for r in rows)


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HYBRIDKP_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", *FAST]) == 0
    assert (tmp_path / "env" / "summary.csv").exists()


def test_generate_then_score(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["generate", *FAST, "--depth-noise", "0.1", "--out", str(data)]) == 0
    assert main(["score", str(data), "--format", "csv", "--out", str(tmp_path / "scored")]) == 0
    assert main(["run", *FAST, "--depth-noise", "0.1", "--format", "csv", "--out", str(tmp_path / "ran")]) == 0
    assert parse_csv(tmp_path / "scored" / "rows.csv") == parse_csv(tmp_path / "ran" / "rows.csv")
    assert main(["score", str(data), "--pnp", "--subpixel", "--out", str(tmp_path / "pnp")]) == 0


def test_ablate(tmp_path, capsys):
    assert main(["ablate", *FAST, "--depth-noise", "0.2", "--modes", "full,gt_depth", "--out", str(tmp_path)]) == 0
    rows = parse_csv(tmp_path / "ablation.csv")
    assert [r["mode"] for r in rows] == ["full", "gt_depth"]
    assert (tmp_path / "gt_depth" / "summary.csv").exists()
    assert "gt_depth" in capsys.readouterr().out


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "hybridkp" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hybridkp", "run", *FAST, "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "hybridkp", "frobnicate"], capture_output=True, text=True)
    assert bad.returncode == 2 and json.loads(bad.stderr.strip())["error"] == "usage"


def test_numpy_fallback_matches(tmp_path):
    script = (
        "import json, sys\n"
        "from hybridkp import backend\n"
        "from hybridkp.harness import ExperimentConfig, run_experiment\n"
        "cfg = ExperimentConfig(categories=('car', 'chair'), instances_per_category=5, canview_noise=0.1, star_noise=0.005)\n"
        "json.dump({'backend': backend(), 'rows': run_experiment(cfg).rows}, sys.stdout)\n"
    )
    env = dict(os.environ, HYBRIDKP_DISABLE_NUMBA="1")
    proc = subprocess.run([sys.executable, "-c", script], capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    got = json.loads(proc.stdout)
    assert got["backend"] == "numpy"
    cfg = ExperimentConfig(categories=("car", "chair"), instances_per_category=5, canview_noise=0.1, star_noise=0.005)
    ref = run_experiment(cfg).rows
    for a, b in zip(got["rows"], ref):
        assert a["status"] == b["status"] and a["n_detected"] == b["n_detected"]
        assert a["rot_err_rad"] == pytest.approx(b["rot_err_rad"], abs=1e-9)
