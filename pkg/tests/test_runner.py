import math
from dataclasses import replace

import numpy as np
import pytest

from fanlab import autograd as ag
from fanlab.datagen import Dataset, Region, SplitSpec, Target, TaskSpec
from fanlab.errors import ConfigError, ContractError, DivergenceError
from fanlab.layers import LayerKind, build_network, count_costs, model_spec
from fanlab.runner import (
    ExperimentConfig,
    ModelConfig,
    bench_runtime,
    compare,
    depth_study,
    evaluate,
    run_flagged,
    sweep_dp,
    train,
)

SPLIT = SplitSpec((-math.pi, math.pi), (-3 * math.pi, 3 * math.pi), points_per_period=32)


def small(kind="fan", epochs=20, **kw):
    model = ModelConfig(name=kw.pop("name", kind.upper()), kind=kind, hidden=kw.pop("hidden", 12),
                        depth=kw.pop("depth", 3))
    return ExperimentConfig(model=model, task=kw.pop("task", TaskSpec(Target.SIN)), split=SPLIT,
                            lr=kw.pop("lr", 1e-2), epochs=epochs, eval_every=kw.pop("eval_every", 5), **kw)


def const_dataset(n=8, y=1.0):
    x = np.linspace(-1, 1, n).reshape(1, -1)
    return Dataset(ag.Tensor(x), ag.Tensor(np.full((1, n), y)), np.array([Region.TRAIN.value] * n))


def test_epoch_schedule():
    with pytest.raises(ConfigError):
        train(small(epochs=0))
    r = train(small(epochs=1, eval_every=1))
    assert [h.epoch for h in r.history] == [0, 1]
    r = train(small(epochs=12, eval_every=5))
    assert [h.epoch for h in r.history] == [0, 5, 10]


def test_linear_target_fits_exactly():
    x = np.linspace(-2, 2, 41).reshape(1, -1)
    ds = Dataset(ag.Tensor(x), ag.Tensor(3 * x + 1), np.array([Region.TRAIN.value] * 41))
    cfg = replace(small("linear", epochs=3000, eval_every=3000), lr=0.05, weight_decay=0.0)
    r = train(cfg, ds)
    assert r.final.train_mse < 1e-6
    head = r.network.layers[0]
    assert head.weight.data[0, 0] == pytest.approx(3.0, abs=1e-3)


def test_training_deterministic():
    a, b = train(small()), train(small())
    strip = lambda r: [replace(h, wall_ms=0.0) for h in r.history]  # noqa: E731
    assert strip(a) == strip(b)
    assert a.snapshot_id == b.snapshot_id


def test_evaluate_fixtures():
    ds = const_dataset(y=1.0)
    zero = build_network(model_spec("linear"), 0)
    zero.layers[0].weight.data[...] = 0.0
    assert evaluate(zero, ds, Region.TRAIN) == (1.0, 1.0)
    zero.layers[0].bias.data[...] = 1.0
    assert evaluate(zero, ds) == (0.0, 0.0)
    # constant residual: Jensen holds with equality
    zero.layers[0].bias.data[...] = 0.25
    mse, mae = evaluate(zero, ds)
    assert mse == pytest.approx(mae ** 2, rel=1e-15)
    with pytest.raises(ContractError):
        evaluate(zero, ds, Region.OOD_TEST)


def test_missing_regions_are_none():
    r = train(small("linear", epochs=2, eval_every=1), const_dataset())
    assert r.final.id_test_mse is None and r.final.ood_test_mse is None


def test_divergence_flagged_not_hidden():
    cfg = replace(small("mlp", epochs=200, eval_every=1), optimizer="sgdm", lr=1e6, momentum=0.9)
    with pytest.raises(DivergenceError) as info:
        train(cfg)
    assert info.value.history and info.value.history[0].epoch == 0
    flagged = run_flagged(cfg)
    assert flagged.diverged and "diverged" in flagged.message


def test_compare_rows_and_self_comparison():
    a = small(name="A")
    b = small(name="B")
    cmp = compare([a, b])
    assert len(cmp.rows()) == 2
    ra, rb = cmp.results
    assert [h.train_mse for h in ra.history] == [h.train_mse for h in rb.history]
    with pytest.raises(ConfigError):
        compare([a, replace(b, task=TaskSpec(Target.MOD))])


def test_compare_ranks_diverged_last():
    good = small(name="ok")
    bad = replace(small("mlp", name="boom", epochs=50), optimizer="sgdm", lr=1e6)
    ranking = compare([bad, good]).ranking()
    assert [r.name for r in ranking] == ["ok", "boom"]


def test_sweep_structure():
    base = small(epochs=2)
    rows = sweep_dp(base, [0.0, 0.25, 0.5])
    assert [r.d_p for r in rows] == [0, 3, 6]
    spec0 = rows[0].result.config.network_spec().layers[0]
    assert spec0.periodic_dim == 0 and spec0.nonperiodic_dim == 12
    spec5 = rows[2].result.config.network_spec().layers[0]
    assert spec5.nonperiodic_dim == 0
    assert ModelConfig().dp_ratio == 0.25
    with pytest.raises(ConfigError):
        sweep_dp(base, [0.7])
    with pytest.raises(ConfigError):
        sweep_dp(small("mlp"), [0.1])


def test_depth_study_structure():
    base = small(epochs=2, hidden=8)
    rows = depth_study(base, [1, 2, 3], residual=True)
    first = rows[0].result.config.network_spec()
    assert [l.kind for l in first.layers] == [LayerKind.FAN, LayerKind.LINEAR]
    params = [r.params for r in rows]
    assert params == sorted(set(params))
    assert all(math.isfinite(r.best_train_mse) for r in rows)


@pytest.mark.xfail(strict=False, reason="at desk scale deeper FSNN stacks fit this target better, "
                                        "so the stacking pathology is not reproduced")
def test_fsnn_depth_does_not_help():
    task = TaskSpec(Target.COMPLEX_PERIODIC_A)
    split = SplitSpec((-6.0, 6.0), (-12.0, 12.0), points_per_period=16, period_hint=1.0)
    base = ExperimentConfig(model=ModelConfig("FSNN", LayerKind.FSNN, hidden=32, n_terms=16), task=task,
                            split=split, lr=1e-2, epochs=600, eval_every=600)
    shallow, deep = depth_study(base, [1, 4])
    assert deep.result.final.train_mse >= 0.5 * shallow.result.final.train_mse


def test_bench_rows():
    rows = bench_runtime([(16, 16), (32, 32)], repeats=3)
    assert [(r.kind, r.d_in) for r in rows] == [("mlp", 16), ("fan", 16), ("mlp", 32), ("fan", 32)]
    for mlp, fan in zip(rows[::2], rows[1::2]):
        assert 4 * fan.matmul_flops == 3 * mlp.matmul_flops
    assert all(r.median_ms > 0 and math.isfinite(r.median_ms) for r in rows)


def test_costs_attached():
    r = train(small(epochs=1))
    assert r.costs.exact_params == count_costs(r.config.network_spec()).exact_params


def test_config_hash_stable():
    assert small().config_hash() == small().config_hash()
    assert small().config_hash() != small(epochs=21).config_hash()
