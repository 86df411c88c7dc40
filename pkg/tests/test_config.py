import json
import math

import pytest

from fanlab.config import apply_override, parse_config, parse_override, parse_real
from fanlab.errors import ConfigError
from fanlab.layers import LayerKind, count_costs
from fanlab.presets import preset_document, preset_names

ALL_PRESETS = ["fig1-sin", "fig3-grid", "fig4-losscurves", "fig6-fourier-baselines", "fig8-extended",
               "appD-snake", "fig7-dp-sweep", "fig9-depth", "table1-accounting", "table5-bench"]


def test_parse_real():
    assert parse_real(3) == 3.0
    assert parse_real("4pi") == 4 * math.pi
    assert parse_real("-0.5*pi") == -0.5 * math.pi
    assert parse_real("pi") == math.pi
    assert parse_real("-pi") == -math.pi
    for bad in ("abc", "4 pies", True):
        with pytest.raises(ValueError):
            parse_real(bad)


def test_empty_file_plus_preset_gives_preset_defaults(tmp_path):
    empty = tmp_path / "empty.toml"
    empty.write_text("")
    a = parse_config(empty, preset="fig1-sin")
    b = parse_config(None, preset="fig1-sin")
    assert a.echo() == b.echo()
    cfgs = a.experiments["main"]
    assert [c.model.name for c in cfgs] == ["FAN", "MLP"]
    assert cfgs[0].epochs == preset_document("fig1-sin")["train"]["epochs"]


def test_override_reflected_in_echo():
    r = parse_config(None, ["train.epochs=10", "models.0.hidden=64"], preset="fig1-sin")
    echo = json.loads(r.echo())
    fan = echo["experiments"]["main"][0]
    assert fan["epochs"] == 10
    assert fan["model"]["hidden"] == 64


def test_match_params_tracks_reference():
    r = parse_config(None, ["models.0.hidden=64"], preset="fig1-sin")
    fan, mlp = r.experiments["main"]
    target = count_costs(fan.network_spec()).exact_params
    got = count_costs(mlp.network_spec()).exact_params
    assert abs(got - target) / target < 0.02


def test_malformed_numeric_reports_position(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('seed = 42\n[train]\nlr = 1e-3e\n')
    with pytest.raises(ConfigError, match=r"line 3"):
        parse_config(bad)


def test_unknown_key_rejected(tmp_path):
    f = tmp_path / "x.toml"
    f.write_text('preset = "fig1-sin"\n[train]\nlearning_rate = 0.1\n')
    with pytest.raises(ConfigError, match="learning_rate"):
        parse_config(f)
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(None, ["train.bogus=1"], preset="fig1-sin")


def test_override_type_checked():
    with pytest.raises(ConfigError, match="epochs"):
        parse_config(None, ['train.epochs="many"'], preset="fig1-sin")
    with pytest.raises(ConfigError):
        parse_config(None, ["train.epochs=1.5"], preset="fig1-sin")
    with pytest.raises(ConfigError):
        parse_config(None, ["models.7.hidden=3"], preset="fig1-sin")


def test_semantic_errors():
    with pytest.raises(ConfigError):
        parse_config(None, ["train.epochs=0"], preset="fig1-sin")
    with pytest.raises(ConfigError):
        parse_config(None, ['split.train_interval=["-20pi", "20pi"]'], preset="fig1-sin")
    with pytest.raises(ConfigError):
        parse_config(None, ['models.1.match_params="GHOST"'], preset="fig1-sin")
    with pytest.raises(ConfigError):
        parse_config(None, preset="fig99")


def test_parse_override():
    assert parse_override("a.b=3") == (["a", "b"], 3)
    assert parse_override("a=[1, 2]") == (["a"], [1, 2])
    assert parse_override("a=fan") == (["a"], "fan")
    with pytest.raises(ConfigError):
        parse_override("novalue")
    doc = {"models": [{"hidden": 1}]}
    apply_override(doc, ["models", "0", "hidden"], 5)
    assert doc["models"][0]["hidden"] == 5


def test_full_file_roundtrip(tmp_path):
    f = tmp_path / "cfg.toml"
    f.write_text("""
seed = 7

[task]
target = "square_wave"
period = "2pi"

[split]
train_interval = ["-2pi", "2pi"]
test_interval = ["-6pi", "6pi"]
points_per_period = 32

[train]
lr = 1e-3
epochs = 5
eval_every = 1

[[models]]
name = "G"
kind = "gated_fan"
hidden = 16

[study]
kind = "compare"
""")
    r = parse_config(f)
    (cfg,) = r.experiments["main"]
    assert cfg.seed == 7
    assert cfg.model.kind is LayerKind.GATED_FAN
    assert cfg.split.train_interval == (-2 * math.pi, 2 * math.pi)
    assert parse_config(f, seed=9).experiments["main"][0].seed == 9


def test_symbolic_task_config():
    r = parse_config(None, ['task.formula="exp_sin_sq"', "task.n_train=50", "task.n_test=20",
                            "models=[{name='F', kind='fan', hidden=8}]"])
    (cfg,) = r.experiments["main"]
    assert cfg.input_dim == 2
    assert cfg.network_spec().d_in == 2


def test_preset_catalog_complete():
    assert preset_names() == ALL_PRESETS


@pytest.mark.parametrize("name", ALL_PRESETS)
@pytest.mark.parametrize("scale", ["desk", "paper"])
def test_every_preset_resolves(name, scale):
    r = parse_config(None, preset=name, scale=scale)
    for cfgs in r.experiments.values():
        for c in cfgs:
            c.validate()
    if scale == "paper" and "split" in preset_document(name, scale):
        assert all(c.split.points_per_period == 10_000 for cfgs in r.experiments.values() for c in cfgs)
