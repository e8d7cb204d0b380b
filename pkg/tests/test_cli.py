"""Test cases for the CLI interface"""

import json
from unittest.mock import patch

import pytest
from click.testing import CliRunner

from cirlab.algorithm import TrainingAborted
from cirlab.cli import main
from cirlab.models import CheckOutcome, TheoremReport


@pytest.fixture
def runner():
    """Create a CLI runner for testing."""
    return CliRunner()


@pytest.fixture
def tiny_config(tmp_path):
    """A config small enough to train in a few seconds."""
    path = tmp_path / "tiny.toml"
    path.write_text(
        'env = "pendulum"\n'
        "steps = 20\n"
        "warmup_steps = 10\n"
        "batch_size = 4\n"
        "critic_hidden = 16\n"
        "actor_hidden = [16, 16]\n"
        "eval_interval = 10\n"
        "eval_episodes = 1\n"
    )
    return path


def test_train_requires_env(runner, tmp_path):
    """Test that a missing env is a config error."""
    result = runner.invoke(main, ["train", "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "env: required" in result.output


def test_train_lambda_flags_are_exclusive(runner):
    result = runner.invoke(main, ["train", "--env", "pendulum", "--avg-q", "--cdq"])
    assert result.exit_code == 2
    assert "mutually exclusive" in result.output


def test_train_conflicting_ablation(runner):
    result = runner.invoke(main, ["train", "--env", "pendulum", "--no-tanh", "--activation", "sigmoid"])
    assert result.exit_code == 2
    assert "--no-tanh conflicts" in result.output


def test_train_writes_artifacts(runner, tiny_config, tmp_path):
    """Test a short run end to end."""
    out = tmp_path / "runs"
    result = runner.invoke(
        main, ["train", "--config", str(tiny_config), "--seed", "3", "--cdq", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output

    seed_dir = out / "seed-3"
    lines = (seed_dir / "curve.csv").read_text().splitlines()
    assert lines[0].startswith("env_step,eval_return")
    assert [line.split(",")[0] for line in lines[1:]] == ["0", "10", "20"]

    summary = json.loads((seed_dir / "summary.json").read_text())
    assert summary["seed"] == 3
    assert summary["env_steps"] == 20
    assert summary["config"]["convex_lambda"] == 1.0

    manifest = json.loads((seed_dir / "manifest.json").read_text())
    assert manifest["finished_at"] is not None
    assert len(manifest["config_hash"]) == 40
    assert (seed_dir / "checkpoint.json").exists()


def test_train_architecture_switch_flags(runner, tiny_config, tmp_path):
    """Test that every architecture switch can be set from the command line."""
    out = tmp_path / "runs"
    result = runner.invoke(
        main,
        [
            "train",
            "--config", str(tiny_config),
            "--no-input-layernorm",
            "--all-avg-rnorm",
            "--init", "orthogonal",
            "--freeze-target-action",
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    config = json.loads((out / "seed-0" / "summary.json").read_text())["config"]
    assert config["input_layernorm"] is False
    assert config["all_avg_rnorm"] is True
    assert config["init"] == "orthogonal"
    assert config["resample_target_action"] is False
    assert config["layernorm"] is True


def test_train_rejects_unknown_init(runner):
    result = runner.invoke(main, ["train", "--env", "pendulum", "--init", "xavier"])
    assert result.exit_code == 2


def test_train_several_seeds(runner, tiny_config, tmp_path):
    result = runner.invoke(
        main,
        ["train", "--config", str(tiny_config), "--steps", "10", "--seeds", "2", "--out", str(tmp_path)],
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "seed-0" / "summary.json").exists()
    assert (tmp_path / "seed-1" / "summary.json").exists()


def test_train_numeric_abort(runner, tiny_config, tmp_path):
    """Test that a non-finite target maps to exit code 3."""
    with patch(
        "cirlab.cli.train_commands.run_training",
        side_effect=TrainingAborted("non-finite Q target in 1 of 4 batch entries"),
    ):
        result = runner.invoke(main, ["train", "--config", str(tiny_config), "--out", str(tmp_path)])
    assert result.exit_code == 3
    assert "non-finite Q target" in result.output
    assert (tmp_path / "seed-0" / "manifest.json").exists()
    assert not (tmp_path / "seed-0" / "summary.json").exists()


def test_train_bad_config_value(runner, tiny_config):
    result = runner.invoke(main, ["train", "--config", str(tiny_config), "--lambda", "2.0"])
    assert result.exit_code == 2
    assert "convex_lambda" in result.output


def test_theory_t1_writes_report(runner, tmp_path):
    result = runner.invoke(main, ["theory", "t1", "--trials", "10", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "1/1 report(s) passed" in result.output
    report = json.loads((tmp_path / "t1-seed0.json").read_text())
    assert report["pass"] is True
    assert report["theorem"] == "t1"
    assert report["parameters"]["trials"] == 10


def test_theory_details_and_seeds(runner, tmp_path):
    result = runner.invoke(
        main, ["theory", "t4", "--seeds", "2", "--seed", "4", "--details", "--out", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "t4-seed4.json").exists()
    assert (tmp_path / "t4-seed5.json").exists()
    checks = json.loads((tmp_path / "t4-seed4.json").read_text())["checks"]
    assert "final_gap" in [c["name"] for c in checks]


def test_theory_failure_exit_code(runner, tmp_path):
    failing = TheoremReport(
        theorem="t5", seed=0, checks=[CheckOutcome("qa_error[lambda=0.3]", 0.5, 1e-2)]
    )
    with patch("cirlab.cli.theory_commands.run_checks", return_value=[failing]):
        result = runner.invoke(main, ["theory", "t5", "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "report(s) failed" in result.output
    assert json.loads((tmp_path / "t5-seed0.json").read_text())["pass"] is False


def test_theory_rejects_zero_seeds(runner):
    result = runner.invoke(main, ["theory", "t1", "--seeds", "0"])
    assert result.exit_code == 2


def test_gradcheck_single_primitive(runner):
    result = runner.invoke(main, ["gradcheck", "--only", "tanh", "--points", "5"])
    assert result.exit_code == 0, result.output
    assert "All 1 gradient checks passed" in result.output


def test_gradcheck_detects_broken_backward(runner, monkeypatch):
    """Test that a mutated tanh derivative fails the suite by name."""
    monkeypatch.setattr("cirlab.autodiff._tanh_backward", lambda y, grad: grad)
    result = runner.invoke(main, ["gradcheck", "--only", "tanh", "--only", "add", "--points", "5"])
    assert result.exit_code == 1
    assert "gradient check failed for: tanh" in result.output


def test_gradcheck_unknown_primitive(runner):
    result = runner.invoke(main, ["gradcheck", "--only", "matmul"])
    assert result.exit_code == 2
    assert "unknown primitive" in result.output


def test_verbose_flag(runner):
    result = runner.invoke(main, ["-v", "gradcheck", "--only", "add", "--points", "2"])
    assert result.exit_code == 0, result.output


def test_help_lists_commands(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for command in ("train", "theory", "gradcheck"):
        assert command in result.output
