import json
from pathlib import Path

import pytest

from app import build_parser, main, plan_runs
from config import TrainerConfig

BANDIT_INI = str(Path(__file__).resolve().parent.parent / "configs" / "bandit.ini")


@pytest.fixture
def bandit_run(tmp_path):
    out = tmp_path / "runs"
    assert main(["run", "--config", BANDIT_INI, "--out", str(out), "--override", "trainer.max_steps=3"]) == 0
    return out / "default" / "seed_0"


def test_run_writes_a_complete_directory(bandit_run):
    for name in ("records.jsonl", "front.json", "summary.json", "metadata.json"):
        assert (bandit_run / name).exists()
    assert (bandit_run / "checkpoints" / "step_0.json").exists()
    with open(bandit_run / "summary.json") as f:
        summary = json.load(f)
    assert summary["status"] == "completed"
    assert summary["objectives"] == ["r0", "r1"]


def test_seed_sweep_writes_aggregate(tmp_path):
    out = tmp_path / "runs"
    argv = ["run", "--config", BANDIT_INI, "--out", str(out),
            "--override", "trainer.max_steps=2", "--override", "harness.n_seeds=2"]
    assert main(argv) == 0
    with open(out / "default" / "sweep.json") as f:
        assert json.load(f)["seeds"] == [0, 1]


def test_plan_runs_single_seed():
    arms = {"a": TrainerConfig(w0=[1.0], seed=2), "b": TrainerConfig(w0=[1.0])}
    assert [(n, c.seed) for n, c in plan_runs(arms, 3, seed=7)] == [("a", 7), ("b", 7)]
    assert [c.seed for _, c in plan_runs(arms, 2, seed=None)] == [2, 3, 0, 1]


def test_unknown_arm_exits_two(tmp_path, capsys):
    assert main(["run", "--config", BANDIT_INI, "--out", str(tmp_path), "--arm", "nope"]) == 2
    assert "unknown arm" in capsys.readouterr().err


def test_bad_config_exits_two(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_oracle_front_enum(capsys):
    assert main(["oracle", "front-enum", "--config", BANDIT_INI]) == 0
    assert "front-enum: PASS" in capsys.readouterr().out


def test_lemma_check_on_fixed_run_is_rejected(bandit_run):
    assert main(["oracle", "lemma-check", "--run", str(bandit_run)]) == 2


def test_lemma_check_needs_run():
    assert main(["oracle", "lemma-check"]) == 2


def test_export_and_compare(bandit_run, tmp_path, capsys):
    assert main(["export", str(bandit_run), "--what", "weights"]) == 0
    assert (bandit_run / "export" / "weights.csv").exists()
    assert main(["compare", str(bandit_run)]) == 2
    assert main(["compare", str(bandit_run), str(bandit_run), "--out", str(tmp_path / "cmp")]) == 0
    assert "equal" in capsys.readouterr().out


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
