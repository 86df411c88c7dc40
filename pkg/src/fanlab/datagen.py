"""Synthetic regression tasks, in-domain/out-of-domain splits and a
quadrature oracle for Fourier coefficients."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from fanlab.autograd import Tensor
from fanlab.errors import ConfigError


class Target(str, Enum):
    SIN = "sin"
    SUM_SINUSOIDS = "sum_sinusoids"
    MOD = "mod"
    COMPLEX_PERIODIC_A = "complex_periodic_a"
    COMPLEX_PERIODIC_B = "complex_periodic_b"
    SQUARE_WAVE = "square_wave"
    CUSTOM = "custom"


COMPLEX_PERIODIC = Target.COMPLEX_PERIODIC_A


class Region(str, Enum):
    TRAIN = "train"
    ID_TEST = "id_test"
    OOD_TEST = "ood_test"


def _square_wave(x, period):
    r = np.mod(x, period) / period
    out = np.where(r < 0.5, 1.0, -1.0)
    # the series converges to the midpoint at each jump
    snap = 1e-12
    at_jump = (np.abs(r) < snap) | (np.abs(r - 0.5) < snap) | (np.abs(r - 1.0) < snap)
    return np.where(at_jump, 0.0, out)


def _triangle(x):
    r = np.mod(x, 2.0 * np.pi) / (2.0 * np.pi)
    return 4.0 * np.abs(r - 0.5) - 1.0


CUSTOM_TARGETS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], float | None]] = {
    "sawtooth": (lambda x: np.mod(x, 2.0 * np.pi) / np.pi - 1.0, 2.0 * np.pi),
    "triangle": (_triangle, 2.0 * np.pi),
    "sin_plus_cos2": (lambda x: np.sin(x) + np.cos(2.0 * x), 2.0 * np.pi),
    "abs_sin": (lambda x: np.abs(np.sin(x)), np.pi),
    "sin_of_exp_sin": (lambda x: np.sin(np.exp(np.sin(x))), 2.0 * np.pi),
}


@dataclass(frozen=True)
class TaskSpec:
    """A scalar target function of one input.

    ``freq`` scales the argument of SIN; ``components`` lists
    ``(amplitude, frequency, phase)`` triples for SUM_SINUSOIDS; ``modulus``
    is MOD's k; ``period`` is SQUARE_WAVE's T; ``custom_id`` names an entry
    of ``CUSTOM_TARGETS``.
    """

    target: Target = Target.SIN
    freq: float = 1.0
    components: tuple[tuple[float, float, float], ...] = ()
    modulus: float = 5.0
    period: float = 2.0 * math.pi
    custom_id: str = ""
    input_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "target", Target(self.target))
        object.__setattr__(self, "components", tuple(tuple(map(float, c)) for c in self.components))
        if self.target is Target.CUSTOM and self.custom_id not in CUSTOM_TARGETS:
            raise ConfigError(f"unknown custom target {self.custom_id!r}; known: {sorted(CUSTOM_TARGETS)}")
        if self.target is Target.MOD and self.modulus <= 0:
            raise ConfigError("MOD needs a positive modulus")
        if self.target is Target.SQUARE_WAVE and self.period <= 0:
            raise ConfigError("SQUARE_WAVE needs a positive period")

    def natural_period(self) -> float | None:
        """Exact period when one exists."""
        t = self.target
        if t is Target.SIN:
            return 2.0 * math.pi / abs(self.freq) if self.freq else None
        if t is Target.MOD:
            return self.modulus
        if t is Target.SQUARE_WAVE:
            return self.period
        if t is Target.CUSTOM:
            return CUSTOM_TARGETS[self.custom_id][1]
        if t is Target.SUM_SINUSOIDS and len(self.components) == 1:
            return 2.0 * math.pi / abs(self.components[0][1])
        return None

    def values(self, x) -> np.ndarray:
        """Vectorized target evaluation (the single source of truth)."""
        x = np.asarray(x, dtype=np.float64)
        t = self.target
        if t is Target.SIN:
            return np.sin(self.freq * x)
        if t is Target.SUM_SINUSOIDS:
            out = np.zeros_like(x)
            for amp, freq, phase in self.components:
                out = out + amp * np.sin(freq * x + phase)
            return out
        if t is Target.MOD:
            return np.mod(x, self.modulus)
        if t is Target.COMPLEX_PERIODIC_A:
            return np.exp(np.sin(np.pi * x) ** 2 + np.cos(x) + np.mod(x, 3.0) - 1.0)
        if t is Target.COMPLEX_PERIODIC_B:
            return np.exp(np.sin(np.pi * x) ** 2 + np.cos(x) + np.mod(x, 3.0)) - 1.0
        if t is Target.SQUARE_WAVE:
            return _square_wave(x, self.period)
        return CUSTOM_TARGETS[self.custom_id][0](x)


def eval_target(task: TaskSpec, x: float) -> float:
    return float(task.values(np.array([x], dtype=np.float64))[0])


@dataclass(frozen=True)
class SplitSpec:
    train_interval: tuple[float, float]
    test_interval: tuple[float, float]
    points_per_period: int = 256
    period_hint: float = 2.0 * math.pi

    def __post_init__(self):
        object.__setattr__(self, "train_interval", tuple(map(float, self.train_interval)))
        object.__setattr__(self, "test_interval", tuple(map(float, self.test_interval)))

    @property
    def step(self) -> float:
        return self.period_hint / self.points_per_period

    def validate(self) -> None:
        lo, hi = self.train_interval
        Lo, Hi = self.test_interval
        if self.points_per_period <= 0:
            raise ConfigError("points_per_period must be positive")
        if self.period_hint <= 0:
            raise ConfigError("period_hint must be positive")
        if not lo < hi:
            raise ConfigError(f"empty train interval {self.train_interval}")
        if not (Lo <= lo and hi <= Hi):
            raise ConfigError(f"train interval {self.train_interval} is not inside {self.test_interval}")
        if Lo == lo and hi == Hi:
            raise ConfigError("test interval equals train interval; no out-of-domain region")


@dataclass
class Dataset:
    inputs: Tensor
    targets: Tensor
    region_tags: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return self.inputs.cols

    def mask(self, regions) -> np.ndarray:
        if regions is None:
            return np.ones(len(self), dtype=bool)
        if isinstance(regions, (Region, str)):
            regions = [regions]
        return np.isin(self.region_tags, [Region(r).value for r in regions])

    def has(self, region) -> bool:
        return bool(np.any(self.region_tags == Region(region).value))

    def subset(self, regions) -> tuple[Tensor, Tensor]:
        key = None if regions is None else tuple(sorted(Region(r).value for r in (
            [regions] if isinstance(regions, (Region, str)) else regions)))
        if key not in self._cache:
            m = self.mask(regions)
            self._cache[key] = (Tensor(self.inputs.data[:, m]), Tensor(self.targets.data[:, m]))
        return self._cache[key]

    def to_csv(self, path) -> None:
        d = self.inputs.rows
        names = ["x"] if d == 1 else [f"x{i + 1}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["y", "region"])
            for j in range(len(self)):
                w.writerow([f"{v:.17g}" for v in self.inputs.data[:, j]]
                           + [f"{self.targets.data[0, j]:.17g}", self.region_tags[j]])


def _segment(start: float, stop: float, step: float) -> np.ndarray:
    n = int(round((stop - start) / step))
    return start + step * np.arange(max(n, 0))


def generate_dataset(task: TaskSpec, split: SplitSpec, seed: int | None = None) -> Dataset:
    """Uniform grid over the test interval, tagged TRAIN / OOD_TEST by the
    train interval, plus ID_TEST points at the half-step offsets inside it.

    Each of [Lo, lo), [lo, hi), [hi, Hi) is gridded from its left end, so
    region counts are exact multiples of the step. ``seed`` is accepted for
    interface symmetry; the grid is not random.
    """
    split.validate()
    lo, hi = split.train_interval
    Lo, Hi = split.test_interval
    step = split.step
    train = _segment(lo, hi, step)
    id_test = lo + step * (np.arange(len(train)) + 0.5)
    ood = np.concatenate([_segment(Lo, lo, step), _segment(hi, Hi, step)])
    xs = np.concatenate([train, id_test, ood])
    tags = np.array([Region.TRAIN.value] * len(train) + [Region.ID_TEST.value] * len(id_test)
                    + [Region.OOD_TEST.value] * len(ood))
    order = np.argsort(xs, kind="stable")
    xs, tags = xs[order], tags[order]
    return Dataset(Tensor(xs.reshape(1, -1)), Tensor(task.values(xs).reshape(1, -1)), tags)


# ---------------------------------------------------------------------------
# symbolic formulas on [-1, 1]^d


SYMBOLIC_FORMULAS: dict[str, tuple[int, Callable[[np.ndarray], np.ndarray]]] = {
    "exp_sin_sq": (2, lambda v: np.exp(np.sin(np.pi * v[0]) + v[1] ** 2)),
    "product": (2, lambda v: v[0] * v[1]),
    "sin_pi": (1, lambda v: np.sin(np.pi * v[0])),
    "exp_sin_4d": (4, lambda v: np.exp(0.5 * (np.sin(np.pi * (v[0] ** 2 + v[1] ** 2))
                                              + np.sin(np.pi * (v[2] ** 2 + v[3] ** 2))))),
}


def eval_symbolic(formula_id: str, point) -> float:
    dim, fn = _formula(formula_id)
    v = np.asarray(point, dtype=np.float64).reshape(dim, 1)
    return float(fn(v)[0])


def _formula(formula_id: str):
    try:
        return SYMBOLIC_FORMULAS[formula_id]
    except KeyError:
        raise ConfigError(f"unknown formula {formula_id!r}; known: {sorted(SYMBOLIC_FORMULAS)}") from None


def symbolic_dataset(formula_id: str, seed: int, n_train: int = 3000, n_test: int = 1000) -> Dataset:
    """Uniform draws in [-1, 1]^d; the train and test draws come from
    independent child streams of ``seed``. Test points are tagged ID_TEST."""
    dim, fn = _formula(formula_id)
    if n_train < 1 or n_test < 1:
        raise ConfigError("sample counts must be positive")
    train_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    x_train = train_rng.uniform(-1.0, 1.0, size=(dim, n_train))
    x_test = test_rng.uniform(-1.0, 1.0, size=(dim, n_test))
    xs = np.concatenate([x_train, x_test], axis=1)
    tags = np.array([Region.TRAIN.value] * n_train + [Region.ID_TEST.value] * n_test)
    return Dataset(Tensor(xs), Tensor(fn(xs).reshape(1, -1)), tags)


# ---------------------------------------------------------------------------
# Fourier oracle


def simpson(values: np.ndarray, h: float) -> float:
    """Composite Simpson over an even number of panels."""
    if (len(values) - 1) % 2:
        raise ConfigError("Simpson's rule needs an even number of panels")
    return float(h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-1:2].sum()))


def fourier_coefficients(task, period: float, n_terms: int, panels: int = 20000):
    """``(a0, a[1..N], b[1..N])`` of ``task`` over one period by Simpson quadrature.

    ``a0`` is the mean over a period and ``a_n``, ``b_n`` carry the usual
    ``2/T`` normalization so that the truncated series reconstructs ``f``.
    ``task`` may be a TaskSpec or a vectorized callable.
    """
    if n_terms < 1:
        raise ConfigError("need at least one Fourier term")
    if panels < 10_000 or panels % 2:
        raise ConfigError("use an even number of panels >= 10000")
    fn = task.values if isinstance(task, TaskSpec) else task
    x = period * np.arange(panels + 1) / panels
    fx = np.asarray(fn(x), dtype=np.float64)
    h = period / panels
    a0 = simpson(fx, h) / period
    a = np.empty(n_terms)
    b = np.empty(n_terms)
    for n in range(1, n_terms + 1):
        w = 2.0 * np.pi * n * x / period
        a[n - 1] = 2.0 / period * simpson(fx * np.cos(w), h)
        b[n - 1] = 2.0 / period * simpson(fx * np.sin(w), h)
    return a0, a, b


def fourier_series(a0: float, a, b, period: float, x) -> np.ndarray:
    """Direct summation of the truncated series at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.full_like(x, a0)
    for n in range(1, len(a) + 1):
        w = 2.0 * np.pi * n * x / period
        out = out + a[n - 1] * np.cos(w) + b[n - 1] * np.sin(w)
    return out
