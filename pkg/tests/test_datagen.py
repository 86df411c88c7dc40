import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanlab.datagen import (
    COMPLEX_PERIODIC,
    CUSTOM_TARGETS,
    Region,
    SplitSpec,
    Target,
    TaskSpec,
    eval_symbolic,
    eval_target,
    fourier_coefficients,
    generate_dataset,
    simpson,
    symbolic_dataset,
)
from fanlab.errors import ConfigError

PI = math.pi


def test_eval_target_examples():
    assert eval_target(TaskSpec(COMPLEX_PERIODIC), 0.0) == 1.0
    mod5 = TaskSpec(Target.MOD, modulus=5)
    assert eval_target(mod5, 7.0) == 2.0
    assert eval_target(mod5, -3.0) == 2.0
    assert eval_target(TaskSpec(Target.SIN), PI / 2) == 1.0


def test_complex_b_keeps_minus_one_outside():
    x = 0.37
    inner = math.sin(PI * x) ** 2 + math.cos(x) + math.fmod(x, 3.0)
    assert eval_target(TaskSpec(Target.COMPLEX_PERIODIC_B), x) == pytest.approx(math.exp(inner) - 1, rel=1e-15)
    assert eval_target(TaskSpec(Target.COMPLEX_PERIODIC_A), x) == pytest.approx(math.exp(inner - 1), rel=1e-15)


def test_square_wave_values():
    sq = TaskSpec(Target.SQUARE_WAVE, period=2 * PI)
    assert eval_target(sq, 1.0) == 1.0
    assert eval_target(sq, 4.0) == -1.0
    assert eval_target(sq, 0.0) == 0.0


def test_sum_sinusoids_and_custom():
    t = TaskSpec(Target.SUM_SINUSOIDS, components=[(1, 1, 0), (0.5, 2, 0.3)])
    assert eval_target(t, 0.8) == pytest.approx(math.sin(0.8) + 0.5 * math.sin(1.6 + 0.3), rel=1e-15)
    with pytest.raises(ConfigError):
        TaskSpec(Target.CUSTOM, custom_id="nope")
    for name, (_, period) in CUSTOM_TARGETS.items():
        task = TaskSpec(Target.CUSTOM, custom_id=name)
        x = np.linspace(-3, 3, 11)
        assert np.allclose(task.values(x), task.values(x + period), atol=1e-9)


def test_grid_counts_for_one_period_unit():
    split = SplitSpec((-2 * PI, 2 * PI), (-8 * PI, 8 * PI), points_per_period=100, period_hint=2 * PI)
    ds = generate_dataset(TaskSpec(Target.SIN), split, 0)
    # 2 periods of train, 6 periods outside
    assert ds.mask(Region.TRAIN).sum() == 200
    assert ds.mask(Region.OOD_TEST).sum() == 600
    assert ds.mask(Region.ID_TEST).sum() == 200


def test_grid_counts_with_pi_unit():
    split = SplitSpec((-2 * PI, 2 * PI), (-8 * PI, 8 * PI), points_per_period=100, period_hint=PI)
    ds = generate_dataset(TaskSpec(Target.SIN), split, 0)
    assert ds.mask(Region.TRAIN).sum() == 400
    assert ds.mask(Region.OOD_TEST).sum() == 1200


def test_regions_respect_intervals():
    split = SplitSpec((-4.0, 4.0), (-10.0, 10.0), points_per_period=16, period_hint=1.0)
    ds = generate_dataset(TaskSpec(Target.SIN), split, 0)
    x = ds.inputs.data[0]
    inside = x[ds.mask([Region.TRAIN, Region.ID_TEST])]
    assert inside.min() >= -4.0 and inside.max() < 4.0
    ood = x[ds.mask(Region.OOD_TEST)]
    assert np.all((ood < -4.0) | (ood >= 4.0))
    assert np.all((ood >= -10.0) & (ood < 10.0))
    assert np.all(np.diff(x) > 0)


def test_dataset_deterministic(tmp_path):
    split = SplitSpec((-PI, PI), (-3 * PI, 3 * PI), 32, 2 * PI)
    a = generate_dataset(TaskSpec(Target.SQUARE_WAVE), split, 1)
    b = generate_dataset(TaskSpec(Target.SQUARE_WAVE), split, 1)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_split_validation():
    for bad in [SplitSpec((1, 0), (-5, 5)), SplitSpec((-6, 1), (-5, 5)), SplitSpec((-5, 5), (-5, 5)),
                SplitSpec((-1, 1), (-5, 5), points_per_period=0)]:
        with pytest.raises(ConfigError):
            bad.validate()


def test_symbolic_dataset():
    a = symbolic_dataset("exp_sin_sq", 5, 300, 100)
    b = symbolic_dataset("exp_sin_sq", 5, 300, 100)
    assert np.array_equal(a.inputs.data, b.inputs.data)
    assert np.all(np.abs(a.inputs.data) <= 1.0)
    assert a.inputs.shape == (2, 400)
    assert a.mask(Region.ID_TEST).sum() == 100
    assert eval_symbolic("exp_sin_sq", (0.0, 0.0)) == 1.0
    with pytest.raises(ConfigError):
        symbolic_dataset("nope", 0)


def test_simpson_exact_for_cubics():
    x = np.linspace(0, 2, 11)
    assert simpson(x ** 3 - x, 0.2) == pytest.approx(4.0 - 2.0, abs=1e-13)
    with pytest.raises(ConfigError):
        simpson(np.ones(4), 0.1)


def test_fourier_pure_sine():
    T = 3.0
    a0, a, b = fourier_coefficients(lambda x: np.sin(2 * PI * x / T), T, 5)
    assert b[0] == pytest.approx(1.0, abs=1e-8)
    assert abs(a0) < 1e-8
    assert np.all(np.abs(a) < 1e-8)
    assert np.all(np.abs(b[1:]) < 1e-8)


def test_fourier_constant():
    a0, a, b = fourier_coefficients(lambda x: np.full_like(x, 2.5), 1.0, 4)
    assert a0 == pytest.approx(2.5, abs=1e-12)
    assert np.all(np.abs(a) < 1e-8) and np.all(np.abs(b) < 1e-8)


def test_fourier_square_wave_textbook():
    a0, a, b = fourier_coefficients(TaskSpec(Target.SQUARE_WAVE), 2 * PI, 9)
    for n in range(1, 10):
        expected = 4 / (n * PI) if n % 2 else 0.0
        assert abs(b[n - 1] - expected) < 1e-6
        assert abs(a[n - 1]) < 1e-6
    assert abs(a0) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.floats(-200, 200, allow_nan=False), st.floats(0.5, 10))
def test_mod_in_range(x, k):
    v = eval_target(TaskSpec(Target.MOD, modulus=k), x)
    assert 0.0 <= v <= k


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50, allow_nan=False))
def test_complex_periodic_is_positive_and_finite(x):
    v = eval_target(TaskSpec(COMPLEX_PERIODIC), x)
    assert 0.0 < v < math.exp(1 + 1 + 3 - 1) + 1e-9
