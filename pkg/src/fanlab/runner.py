"""Training/evaluation engine and the comparison, d_p-sweep, depth and
runtime studies built on it."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from fanlab import autograd as ag
from fanlab.datagen import Dataset, Region, SplitSpec, TaskSpec, generate_dataset, symbolic_dataset
from fanlab.errors import ConfigError, ContractError, DivergenceError, NonFiniteError
from fanlab.layers import (
    FAN_KINDS,
    Activation,
    CostReport,
    LayerKind,
    Network,
    build_network,
    count_costs,
    init_layer,
    layer_costs,
    LayerSpec,
    model_spec,
)
from fanlab.optim import make_optimizer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    """Recipe for a standard stack (see ``layers.model_spec``).

    ``depth`` counts every layer including the linear head.
    """

    name: str = "FAN"
    kind: LayerKind = LayerKind.FAN
    hidden: int = 256
    depth: int = 3
    dp_ratio: float = 0.25
    activation: Activation = Activation.GELU
    residual: bool = False
    n_terms: int | None = None
    head_init: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.head_init not in ("uniform", "zero"):
            raise ConfigError(f"head_init must be 'uniform' or 'zero', got {self.head_init!r}")

    def network_spec(self, d_in: int = 1, d_out: int = 1):
        return model_spec(self.kind, d_in=d_in, d_out=d_out, hidden=self.hidden, depth=self.depth,
                          dp_ratio=self.dp_ratio, activation=self.activation,
                          residual=self.residual, n_terms=self.n_terms)


@dataclass(frozen=True)
class SymbolicTask:
    formula: str
    n_train: int = 3000
    n_test: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    task: TaskSpec | SymbolicTask = field(default_factory=TaskSpec)
    split: SplitSpec | None = None
    optimizer: str = "adamw"
    lr: float = 1e-5
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    momentum: float = 0.9
    epochs: int = 2000
    eval_every: int = 50
    seed: int = 42
    run: str = ""

    @property
    def input_dim(self) -> int:
        if isinstance(self.task, SymbolicTask):
            from fanlab.datagen import SYMBOLIC_FORMULAS
            return SYMBOLIC_FORMULAS[self.task.formula][0]
        return self.task.input_dim

    def network_spec(self):
        return self.model.network_spec(d_in=self.input_dim)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.optimizer not in ("adamw", "sgdm"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if isinstance(self.task, TaskSpec):
            if self.split is None:
                raise ConfigError("periodic tasks need a split")
            self.split.validate()
        self.network_spec().validate()

    def optimizer_kwargs(self) -> dict:
        if self.optimizer == "adamw":
            return dict(lr=self.lr, betas=tuple(self.betas), eps=self.eps, weight_decay=self.weight_decay)
        return dict(lr=self.lr, momentum=self.momentum)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    train_mse: float
    id_test_mse: float | None
    ood_test_mse: float | None
    train_mae: float
    id_test_mae: float | None
    ood_test_mae: float | None
    wall_ms: float

    def losses(self):
        return [v for v in (self.train_mse, self.id_test_mse, self.ood_test_mse,
                            self.train_mae, self.id_test_mae, self.ood_test_mae) if v is not None]


@dataclass
class RunResult:
    config: ExperimentConfig
    history: list[MetricsRecord]
    costs: CostReport
    snapshot_id: str
    config_hash: str
    diverged: bool = False
    message: str = ""
    network: Network | None = field(default=None, repr=False, compare=False)
    dataset: Dataset | None = field(default=None, repr=False, compare=False)

    @property
    def name(self) -> str:
        return self.config.model.name

    @property
    def final(self) -> MetricsRecord:
        return self.history[-1]

    def best(self, attr: str) -> float:
        vals = [getattr(r, attr) for r in self.history if getattr(r, attr) is not None]
        return min(vals) if vals else math.nan


def make_dataset(config: ExperimentConfig) -> Dataset:
    if isinstance(config.task, SymbolicTask):
        return symbolic_dataset(config.task.formula, config.seed, config.task.n_train, config.task.n_test)
    return generate_dataset(config.task, config.split, config.seed)


def initialize(config: ExperimentConfig) -> Network:
    net = build_network(config.network_spec(), config.seed)
    if config.model.head_init == "zero":
        head = net.layers[-1]
        head.weight.data[...] = 0.0
        head.bias.data[...] = 0.0
    return net


def evaluate(network: Network, dataset: Dataset, region=None) -> tuple[float, float]:
    """(MSE, MAE) over the points carrying ``region`` (a Region, a list of
    them, or None for every point)."""
    if region is not None and not np.any(dataset.mask(region)):
        raise ContractError(f"dataset has no points tagged {region}")
    x, y = dataset.subset(region)
    resid = network.predict(x) - y.data
    mse = float(np.mean(resid * resid))
    mae = float(np.mean(np.abs(resid)))
    if not (math.isfinite(mse) and math.isfinite(mae)):
        raise NonFiniteError(f"non-finite loss on region {region}")
    return mse, mae


def _record(network, dataset, epoch, wall_ms) -> MetricsRecord:
    vals = {}
    for region, key in ((Region.TRAIN, "train"), (Region.ID_TEST, "id_test"), (Region.OOD_TEST, "ood_test")):
        if dataset.has(region):
            vals[key] = evaluate(network, dataset, region)
        else:
            vals[key] = (None, None)
    return MetricsRecord(epoch, vals["train"][0], vals["id_test"][0], vals["ood_test"][0],
                         vals["train"][1], vals["id_test"][1], vals["ood_test"][1], wall_ms)


def train(config: ExperimentConfig, dataset: Dataset | None = None) -> RunResult:
    """Full-batch training on the TRAIN region; metrics at epoch 0 and every
    ``eval_every`` epochs. Raises DivergenceError on the first non-finite value."""
    config.validate()
    dataset = dataset if dataset is not None else make_dataset(config)
    spec = config.network_spec()
    net = initialize(config)
    opt = make_optimizer(config.optimizer, net.parameters(), **config.optimizer_kwargs())
    x_tr, y_tr = dataset.subset(Region.TRAIN)

    history: list[MetricsRecord] = []
    elapsed = 0.0
    epoch = 0
    try:
        history.append(_record(net, dataset, 0, 0.0))
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            opt.zero_grad()
            tape = ag.Tape()
            loss = ag.mse_loss(net(x_tr, tape), y_tr, tape)
            tape.backward(loss)
            opt.step()
            elapsed += time.perf_counter() - t0
            if epoch % config.eval_every == 0:
                history.append(_record(net, dataset, epoch, elapsed * 1e3))
    except NonFiniteError as exc:
        last = history[-1] if history else None
        raise DivergenceError(f"{config.model.name}: diverged at epoch {epoch}: {exc}",
                              last_record=last, history=history) from exc

    return RunResult(config, history, count_costs(spec), net.snapshot_id(), config.config_hash(),
                     network=net, dataset=dataset)


def run_flagged(config: ExperimentConfig, dataset: Dataset | None = None) -> RunResult:
    """``train`` that turns divergence into a flagged result instead of raising."""
    try:
        return train(config, dataset)
    except DivergenceError as exc:
        log.warning("%s", exc)
        return RunResult(config, exc.history, count_costs(config.network_spec()), "",
                         config.config_hash(), diverged=True, message=str(exc))


def _run_all(configs, dataset=None, workers: int = 1) -> list[RunResult]:
    if workers <= 1 or len(configs) <= 1:
        return [run_flagged(c, dataset) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_flagged(c, dataset), configs))


@dataclass
class Comparison:
    results: list[RunResult]

    def ranking(self) -> list[RunResult]:
        """Results ordered by final OOD MSE; diverged runs last."""
        def key(r):
            ood = r.final.ood_test_mse if r.history else None
            return (r.diverged, math.inf if ood is None else ood)
        return sorted(self.results, key=key)

    def rows(self) -> list[dict]:
        return [dict(model=r.name, diverged=r.diverged,
                     train_mse=r.final.train_mse if r.history else math.nan,
                     id_mse=r.final.id_test_mse if r.history else math.nan,
                     ood_mse=r.final.ood_test_mse if r.history else math.nan,
                     params=r.costs.exact_params)
                for r in self.ranking()]


def _same_data(configs) -> None:
    ref = configs[0]
    for c in configs[1:]:
        if c.task != ref.task or c.split != ref.split:
            raise ConfigError(f"{c.model.name} uses a different task or split than {ref.model.name}")


def compare(configs, workers: int = 1) -> Comparison:
    configs = list(configs)
    if not configs:
        raise ConfigError("nothing to compare")
    _same_data(configs)
    for c in configs:
        c.validate()
    dataset = make_dataset(configs[0])
    if len({c.seed for c in configs}) > 1:
        dataset = None  # each run draws its own data
    return Comparison(_run_all(configs, dataset, workers))


@dataclass
class SweepRow:
    ratio: float
    d_p: int
    result: RunResult


def sweep_dp(base: ExperimentConfig, ratios, workers: int = 1) -> list[SweepRow]:
    if base.model.kind not in FAN_KINDS:
        raise ConfigError("d_p sweeps need a FAN model")
    for r in ratios:
        if not 0.0 <= r <= 0.5:
            raise ConfigError(f"d_p ratio {r} outside [0, 0.5]")
    configs = [replace(base, model=replace(base.model, name=f"{base.model.name}@dp{r:g}", dp_ratio=r))
               for r in ratios]
    results = _run_all(configs, make_dataset(base), workers)
    return [SweepRow(r, int(math.floor(r * base.model.hidden)), res) for r, res in zip(ratios, results)]


@dataclass
class DepthRow:
    depth: int
    params: int
    best_train_mse: float
    best_id_mse: float
    best_ood_mse: float
    result: RunResult


def depth_study(base: ExperimentConfig, depths, residual: bool | None = None,
                workers: int = 1) -> list[DepthRow]:
    """One run per entry of ``depths`` where depth counts hidden layers of the
    base kind (depth 1 = one hidden layer + the linear head)."""
    if any(d < 1 for d in depths):
        raise ConfigError("depths must be >= 1")
    residual = base.model.residual if residual is None else residual
    configs = []
    for d in depths:
        model = replace(base.model, name=f"{base.model.name}x{d}", depth=d + 1, residual=residual)
        cfg = replace(base, model=model)
        cfg.network_spec().validate()
        configs.append(cfg)
    results = _run_all(configs, make_dataset(base), workers)
    return [DepthRow(d, r.costs.exact_params, r.best("train_mse"), r.best("id_test_mse"),
                     r.best("ood_test_mse"), r) for d, r in zip(depths, results)]


@dataclass
class BenchRow:
    kind: str
    d_in: int
    d_out: int
    median_ms: float
    params: int
    exact_flops: int
    matmul_flops: int
    repeats: int


def bench_runtime(dims, repeats: int = 100, batch: int = 1, seed: int = 0,
                  dp_ratio: float = 0.25) -> list[BenchRow]:
    """Median forward wall time of one FAN layer and one MLP layer per
    ``(d_in, d_out)``; layers are built one at a time to bound memory."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    rows = []
    rng = np.random.default_rng(seed)
    for d_in, d_out in dims:
        if d_in < 1 or d_out < 1:
            raise ConfigError(f"bench dims must be positive, got {(d_in, d_out)}")
        x = ag.Tensor(rng.standard_normal((d_in, batch)))
        for kind in (LayerKind.MLP, LayerKind.FAN):
            spec = LayerSpec(kind, d_in, d_out, d_p=int(dp_ratio * d_out) if kind is LayerKind.FAN else None)
            layer = init_layer(spec, np.random.default_rng(seed))
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                layer(x)
                times.append(time.perf_counter() - t0)
            cost = layer_costs(spec)
            rows.append(BenchRow(kind.value, d_in, d_out, float(np.median(times) * 1e3),
                                 cost.exact_params, cost.exact_flops, cost.exact_matmul_flops, repeats))
            del layer
    return rows
