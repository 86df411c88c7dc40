import json

from fanlab.cli import main
from tests.test_config import ALL_PRESETS

FAST = ["--set", "train.epochs=2", "--set", "train.eval_every=1", "--set", "models.0.hidden=8",
        "--set", "split.points_per_period=16"]


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    assert capsys.readouterr().out.split() == ALL_PRESETS


def test_compare_writes_bundle(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["compare", "--preset", "fig1-sin", "--out", str(out), *FAST]) == 0
    assert (out / "metrics.csv").exists()
    echo = json.loads((out / "resolved_config.json").read_text())
    assert echo["seed"] == 42
    assert echo["experiments"]["main"][0]["epochs"] == 2


def test_default_output_uses_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FANLAB_OUTPUT", str(tmp_path))
    assert main(["run", "table1-accounting", "--seed", "3"]) == 0
    assert (tmp_path / "table1-accounting-desk-seed3" / "accounting.csv").exists()


def test_config_error_is_machine_readable(capsys):
    assert main(["compare", "--preset", "fig1-sin", "--set", "train.nope=1"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"
    assert "nope" in err["message"]


def test_divergence_exit_code(tmp_path, capsys):
    args = ["compare", "--preset", "fig1-sin", "--out", str(tmp_path), *FAST,
            "--set", "train.optimizer='sgdm'", "--set", "train.lr=1e9", "--set", "train.epochs=30"]
    assert main(args) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "divergence"
    assert err["runs"]


def test_train_requires_single_model(tmp_path, capsys):
    assert main(["train", "--preset", "fig1-sin", "--out", str(tmp_path), *FAST]) == 2
    assert main(["train", "--preset", "fig1-sin", "--out", str(tmp_path), *FAST,
                 "--set", "models=[{name='F', kind='fan', hidden=8}]"]) == 0


def test_gradcheck_and_count(capsys):
    assert main(["gradcheck", "--max-dim", "8"]) == 0
    assert capsys.readouterr().out.count(" ok") == 7
    assert main(["count", "--preset", "fig1-sin"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [r["model"] for r in report] == ["FAN", "MLP"]
    assert report[0]["table1_params"] - report[0]["exact_params"] == 64 + 64


def test_sweep_and_depth(tmp_path):
    assert main(["sweep-dp", "--preset", "fig7-dp-sweep", "--out", str(tmp_path / "s"), *FAST,
                 "--set", "study.ratios=[0.0, 0.25]"]) == 0
    assert (tmp_path / "s" / "sweep.csv").read_text().count("\n") == 3
    assert main(["depth", "--preset", "fig9-depth", "--out", str(tmp_path / "d"), *FAST,
                 "--set", "study.depths=[1, 2]"]) == 0
    assert (tmp_path / "d" / "depth.csv").exists()
