import json
import os

import pytest
from click.testing import CliRunner

from gpinn import formats
from gpinn.cli import cli, default_jobs
from gpinn.config import PRESETS
from gpinn.errors import TrainingDivergedError

TINY = {
    "name": "tiny",
    "problem": {"name": "poisson-1d"},
    "method": "gpinn",
    "train": {"depth": 2, "width": 6, "iterations": 20, "n_points": 8, "snapshot_every": 10,
              "weights": {"w": 0.01}},
}


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, **extra):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({**TINY, **extra}), encoding="utf-8")
    return str(path)


def invoke(runner, tmp_path, *args):
    return runner.invoke(cli, [*args, "--cache", str(tmp_path / "cache")])


def test_presets_listing_and_export(runner, tmp_path):
    result = runner.invoke(cli, ["presets", "--export", str(tmp_path / "presets")])
    assert result.exit_code == 0, result.output
    assert "3.4.2" in result.output
    assert sorted(p.stem for p in (tmp_path / "presets").glob("*.json")) == sorted(PRESETS)


def test_run_writes_artifacts(runner, tmp_path):
    config = write_config(tmp_path)
    result = invoke(runner, tmp_path, "run", "--config", config, "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output

    exp_dir = tmp_path / "out" / "tiny"
    run_dir = exp_dir / "gpinn_n8_w0.01" / "0"
    rows = formats.read_csv(run_dir / "metrics.csv")
    assert [r["iteration"] for r in rows] == ["0", "10", "20"]
    assert {"loss", "L_f", "L_g_x", "u_error", "du_error_x", "mean_abs_residual"} <= set(rows[0])
    assert formats.load_params(run_dir / "params_u.gpnp").layer_sizes == (1, 6, 1)
    assert formats.load_checkpoint(run_dir / "checkpoint.gpck").iteration == 20

    summary = formats.read_json(run_dir / "result.json")
    assert summary["iterations"] == 20
    manifest = formats.read_json(exp_dir / "manifest.json")
    (entry,) = manifest["runs"]
    assert entry["cell"] == "gpinn_n8_w0.01"
    assert entry["status"] == "ok"
    assert manifest["config"]["name"] == "tiny"


def test_run_is_reproducible(runner, tmp_path):
    config = write_config(tmp_path)
    for out in ("a", "b"):
        result = invoke(runner, tmp_path, "run", "--config", config, "--out", str(tmp_path / out))
        assert result.exit_code == 0, result.output
    a = (tmp_path / "a" / "tiny" / "gpinn_n8_w0.01" / "0" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "tiny" / "gpinn_n8_w0.01" / "0" / "metrics.csv").read_bytes()
    assert a == b


def test_resume_from_checkpoint(runner, tmp_path):
    config = write_config(tmp_path)
    out = str(tmp_path / "out")
    assert invoke(runner, tmp_path, "run", "--config", config, "--out", out).exit_code == 0
    checkpoint = tmp_path / "out" / "tiny" / "gpinn_n8_w0.01" / "0" / "checkpoint.gpck"

    longer = write_config(tmp_path, train={**TINY["train"], "iterations": 30})
    result = invoke(runner, tmp_path, "run", "--config", longer, "--out", out, "--resume", str(checkpoint))
    assert result.exit_code == 0, result.output
    rows = formats.read_csv(checkpoint.parent / "metrics.csv")
    assert [r["iteration"] for r in rows] == ["0", "10", "20", "30"]


def test_rar_writes_points_per_round(runner, tmp_path):
    config = write_config(tmp_path, rar={"m": 2, "rounds": 2, "candidates": 20, "iterations_per_round": 5})
    result = invoke(runner, tmp_path, "rar", "--config", config, "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    run_dir = tmp_path / "out" / "tiny" / "gpinn_n8_w0.01" / "0"
    counts = [len(formats.read_csv(run_dir / f"points_round_{r}.csv")) for r in range(3)]
    assert counts == [8, 10, 12]
    assert set(formats.read_csv(run_dir / "points_round_2.csv")[0]) == {"x", "provenance"}


def test_rar_needs_rar_section(runner, tmp_path):
    result = invoke(runner, tmp_path, "rar", "--config", write_config(tmp_path), "--out", str(tmp_path / "out"))
    assert result.exit_code == 2


def test_sweep_and_report(runner, tmp_path):
    config = write_config(tmp_path, sweep={"methods": ["pinn", "gpinn"], "seeds": [0, 1]})
    out = str(tmp_path / "out")
    result = invoke(runner, tmp_path, "sweep", "--config", config, "--out", out, "--jobs", "1")
    assert result.exit_code == 0, result.output

    exp_dir = tmp_path / "out" / "tiny"
    rows = formats.read_csv(exp_dir / "sweep.csv")
    assert [r["cell"] for r in rows] == ["pinn_n8_w0", "gpinn_n8_w0.01"]
    assert all(r["n_seeds"] == "2" and r["n_failed"] == "0" for r in rows)
    assert float(rows[0]["std_u_error"]) >= 0.0
    assert len(formats.read_json(exp_dir / "manifest.json")["runs"]) == 4

    result = runner.invoke(cli, ["report", "--out", str(exp_dir)])
    assert result.exit_code == 0, result.output
    text = (exp_dir / "report.md").read_text(encoding="utf-8")
    assert "| 8 | pinn |" in text
    assert "| 8 | gpinn |" in text
    assert "report.md" in formats.read_json(exp_dir / "manifest.json")["artifacts"]


def test_report_without_sweep(runner, tmp_path):
    result = runner.invoke(cli, ["report", "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_config_errors_exit_with_code_2(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"problem": {"name": "heat"}}), encoding="utf-8")
    assert invoke(runner, tmp_path, "run", "--config", str(path)).exit_code == 2
    assert invoke(runner, tmp_path, "run", "--config", str(tmp_path / "missing.json")).exit_code == 2
    assert invoke(runner, tmp_path, "run", "--config", write_config(tmp_path), "--seeds", "a,b").exit_code == 2


def test_divergence_exits_with_code_3(runner, tmp_path, monkeypatch):
    def diverge(*args, **kwargs):
        raise TrainingDivergedError("loss nan", iteration=5)

    monkeypatch.setattr("gpinn.cli.execute_run", diverge)
    result = invoke(runner, tmp_path, "run", "--config", write_config(tmp_path), "--out", str(tmp_path / "out"))
    assert result.exit_code == 3


def test_settings_command(runner):
    assert runner.invoke(cli, ["settings", "jobs", "4"]).exit_code == 0
    result = runner.invoke(cli, ["settings", "jobs"])
    assert "jobs = 4" in result.output
    assert runner.invoke(cli, ["settings", "jobs", "many"]).exit_code == 2
    assert runner.invoke(cli, ["settings", "colour", "blue"]).exit_code == 2


def test_default_jobs_follows_cpu_affinity(monkeypatch):
    monkeypatch.setattr(os, "sched_getaffinity", lambda pid: {0, 2, 5}, raising=False)
    assert default_jobs() == 3
    monkeypatch.delattr(os, "sched_getaffinity", raising=False)
    monkeypatch.setattr(os, "cpu_count", lambda: None)
    assert default_jobs() == 1


def test_sweep_rejects_zero_jobs(runner, tmp_path):
    config = write_config(tmp_path, sweep={"methods": ["pinn"], "seeds": [0]})
    result = invoke(runner, tmp_path, "sweep", "--config", config, "--out", str(tmp_path / "out"), "--jobs", "0")
    assert result.exit_code == 2
    assert not (tmp_path / "out").exists()


def test_error_panel_shows_exit_code(runner, tmp_path):
    result = invoke(runner, tmp_path, "run", "--config", str(tmp_path / "missing.json"))
    assert result.exit_code == 2
    assert "exit 2" in result.output
