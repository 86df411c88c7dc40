"""TOML experiment files: schema, preset merging, overrides and resolution
into ``ExperimentConfig`` objects.

A file looks like::

    preset = "fig1-sin"          # optional; file values are merged over it
    seed = 42

    [task]
    target = "sin"

    [split]
    train_interval = ["-4pi", "4pi"]   # numbers or multiples of pi
    test_interval = ["-16pi", "16pi"]
    points_per_period = 256
    period_hint = "2pi"

    [train]
    optimizer = "adamw"
    lr = 1e-3
    epochs = 2000
    eval_every = 50

    [[models]]
    name = "FAN"
    kind = "fan"
    hidden = 256

    [[models]]
    name = "MLP"
    kind = "mlp"
    match_params = "FAN"         # pick hidden so parameter counts match

    [study]
    kind = "compare"             # compare | sweep-dp | depth | bench | accounting

Overrides are ``dotted.key=value`` strings (``train.epochs=10``,
``models.0.hidden=64``); values are parsed as TOML scalars/arrays.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from fanlab.datagen import SplitSpec, Target, TaskSpec
from fanlab.errors import ConfigError
from fanlab.layers import Activation, LayerKind, count_costs, match_hidden
from fanlab.runner import ExperimentConfig, ModelConfig, SymbolicTask

_PI_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)?)\s*\*?\s*pi\s*$")


def parse_real(value) -> float:
    """Accept a number or a string like ``"4pi"``, ``"-0.5*pi"``, ``"pi"``."""
    if isinstance(value, bool):
        raise ValueError("expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI_RE.match(value)
        if m:
            coef = m.group(1)
            if coef in ("", "+", "-"):
                coef += "1"
            return float(coef) * math.pi
    raise ValueError(f"expected a number or a multiple of pi, got {value!r}")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


Real = float | int | str


class TaskSection(_Strict):
    target: Target = Target.SIN
    freq: Real = 1.0
    components: list[list[Real]] = Field(default_factory=list)
    modulus: Real = 5.0
    period: Real = "2pi"
    custom_id: str = ""
    formula: str = ""
    n_train: int = 3000
    n_test: int = 1000

    @field_validator("target", mode="before")
    @classmethod
    def _target(cls, v):
        return Target(v) if isinstance(v, str) else v


class SplitSection(_Strict):
    train_interval: list[Real] = Field(default_factory=lambda: ["-4pi", "4pi"])
    test_interval: list[Real] = Field(default_factory=lambda: ["-16pi", "16pi"])
    points_per_period: int = 256
    period_hint: Real = "2pi"


class TrainSection(_Strict):
    optimizer: Literal["adamw", "sgdm"] = "adamw"
    lr: Real = 1e-5
    weight_decay: Real = 0.01
    betas: list[Real] = Field(default_factory=lambda: [0.9, 0.999])
    eps: Real = 1e-8
    momentum: Real = 0.9
    epochs: int = 2000
    eval_every: int = 50


class ModelSection(_Strict):
    name: str
    kind: LayerKind
    hidden: int = 256
    depth: int = 3
    dp_ratio: Real = 0.25
    activation: Activation = Activation.GELU
    residual: bool = False
    n_terms: int | None = None
    head_init: Literal["uniform", "zero"] = "uniform"
    match_params: str = ""

    @field_validator("kind", "activation", mode="before")
    @classmethod
    def _enum(cls, v, info):
        if isinstance(v, str):
            return LayerKind(v) if info.field_name == "kind" else Activation(v)
        return v


class StudySection(_Strict):
    kind: Literal["train", "compare", "sweep-dp", "depth", "bench", "accounting"] = "compare"
    ratios: list[Real] = Field(default_factory=lambda: [0.0, 0.125, 0.25, 0.375, 0.5])
    depths: list[int] = Field(default_factory=lambda: [1, 2, 3])
    residual: bool = False
    dims: list[list[int]] = Field(default_factory=lambda: [[1024, 1024], [2048, 2048],
                                                           [4096, 4096], [8192, 8192]])
    repeats: int = 100
    grid: list[int] = Field(default_factory=lambda: [16, 64, 256, 1024])
    plots: list[Literal["fit-curve", "loss-curve", "sweep"]] = Field(default_factory=list)


class ConfigFile(_Strict):
    preset: str = ""
    seed: int = 42
    workers: int = 1
    task: TaskSection = Field(default_factory=TaskSection)
    tasks: dict[str, TaskSection] = Field(default_factory=dict)
    split: SplitSection = Field(default_factory=SplitSection)
    train: TrainSection = Field(default_factory=TrainSection)
    models: list[ModelSection] = Field(default_factory=list)
    study: StudySection = Field(default_factory=StudySection)


@dataclass
class ResolvedConfig:
    """Everything a CLI invocation needs. ``experiments`` maps a task label
    to the per-model configs for that task (one label unless ``[tasks]`` is
    used)."""

    file: ConfigFile
    experiments: dict[str, list[ExperimentConfig]]
    raw: dict = field(default_factory=dict)

    @property
    def study(self) -> StudySection:
        return self.file.study

    @property
    def seed(self) -> int:
        return self.file.seed

    def echo(self) -> str:
        doc = {
            "preset": self.file.preset,
            "seed": self.file.seed,
            "study": self.file.study.model_dump(mode="json"),
            "experiments": {label: [c.to_dict() for c in cfgs] for label, cfgs in self.experiments.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def apply_override(doc: dict, path: list[str], value) -> None:
    node: Any = doc
    for i, part in enumerate(path[:-1]):
        nxt = path[i + 1]
        if isinstance(node, list):
            node = node[_index(node, part, path)]
            continue
        if part not in node:
            node[part] = [] if nxt.isdigit() else {}
        node = node[part]
    last = path[-1]
    if isinstance(node, list):
        node[_index(node, last, path)] = value
    else:
        node[last] = value


def _index(seq, part, path):
    if not part.isdigit() or int(part) >= len(seq):
        raise ConfigError(f"override {'.'.join(path)}: no list element {part}")
    return int(part)


def load_toml(path) -> dict:
    text = Path(path).read_text()
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def validate_document(doc: dict, source: str = "<config>") -> ConfigFile:
    try:
        return ConfigFile.model_validate(doc)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"{source}: {problems}") from None


def _task(section: TaskSection, source: str):
    try:
        if section.formula:
            return SymbolicTask(section.formula, section.n_train, section.n_test)
        return TaskSpec(
            target=section.target,
            freq=parse_real(section.freq),
            components=tuple(tuple(parse_real(v) for v in c) for c in section.components),
            modulus=parse_real(section.modulus),
            period=parse_real(section.period),
            custom_id=section.custom_id,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: task: {exc}") from None


def _split(section: SplitSection, source: str) -> SplitSpec:
    try:
        lo_hi = [parse_real(v) for v in section.train_interval]
        test = [parse_real(v) for v in section.test_interval]
        if len(lo_hi) != 2 or len(test) != 2:
            raise ValueError("intervals need exactly two endpoints")
        split = SplitSpec(tuple(lo_hi), tuple(test), section.points_per_period, parse_real(section.period_hint))
    except ValueError as exc:
        raise ConfigError(f"{source}: split: {exc}") from None
    split.validate()
    return split


def _models(sections: list[ModelSection], input_dim: int, source: str) -> list[ModelConfig]:
    if not sections:
        raise ConfigError(f"{source}: no [[models]] defined")
    names = [m.name for m in sections]
    if len(set(names)) != len(names):
        raise ConfigError(f"{source}: duplicate model names {names}")
    resolved: dict[str, ModelConfig] = {}
    pending = list(sections)
    while pending:
        progressed = False
        for m in list(pending):
            if m.match_params and m.match_params not in resolved:
                if m.match_params not in names:
                    raise ConfigError(f"{source}: model {m.name} matches unknown model {m.match_params!r}")
                continue
            cfg = ModelConfig(name=m.name, kind=m.kind, hidden=m.hidden, depth=m.depth,
                              dp_ratio=parse_real(m.dp_ratio), activation=m.activation,
                              residual=m.residual, n_terms=m.n_terms, head_init=m.head_init)
            if m.match_params:
                ref = resolved[m.match_params]
                target = count_costs(ref.network_spec(d_in=input_dim)).exact_params
                hidden = match_hidden(m.kind, target, d_in=input_dim, depth=m.depth,
                                      dp_ratio=cfg.dp_ratio, activation=m.activation, n_terms=m.n_terms)
                cfg = ModelConfig(**{**cfg.__dict__, "hidden": hidden})
            resolved[m.name] = cfg
            pending.remove(m)
            progressed = True
        if not progressed:
            raise ConfigError(f"{source}: circular match_params among {[m.name for m in pending]}")
    return [resolved[n] for n in names]


def resolve(cf: ConfigFile, source: str = "<config>", raw: dict | None = None) -> ResolvedConfig:
    split = _split(cf.split, source)
    tr = cf.train
    task_sections = cf.tasks or {"main": cf.task}
    experiments = {}
    for label, section in task_sections.items():
        task = _task(section, f"{source} [{label}]")
        input_dim = task.input_dim if isinstance(task, TaskSpec) else None
        if input_dim is None:
            from fanlab.datagen import SYMBOLIC_FORMULAS

            if task.formula not in SYMBOLIC_FORMULAS:
                raise ConfigError(f"{source}: unknown formula {task.formula!r}")
            input_dim = SYMBOLIC_FORMULAS[task.formula][0]
        models = _models(cf.models, input_dim, source)
        cfgs = []
        for i, model in enumerate(models):
            try:
                cfg = ExperimentConfig(
                    model=model, task=task, split=split if isinstance(task, TaskSpec) else None,
                    optimizer=tr.optimizer, lr=parse_real(tr.lr), weight_decay=parse_real(tr.weight_decay),
                    betas=tuple(parse_real(b) for b in tr.betas), eps=parse_real(tr.eps),
                    momentum=parse_real(tr.momentum), epochs=tr.epochs, eval_every=tr.eval_every,
                    seed=cf.seed, run=f"{label}/{i}")
            except ValueError as exc:
                raise ConfigError(f"{source}: train: {exc}") from None
            cfg.validate()
            cfgs.append(cfg)
        experiments[label] = cfgs
    return ResolvedConfig(cf, experiments, raw or {})


def parse_config(path=None, overrides=(), preset: str | None = None, scale: str = "desk",
                 seed: int | None = None) -> ResolvedConfig:
    """Merge preset defaults, the file at ``path`` and ``overrides`` (in that
    order) and resolve them. ``path`` may be None or an empty file."""
    from fanlab.presets import preset_document

    source = str(path) if path is not None else "<overrides>"
    doc = load_toml(path) if path is not None else {}
    name = preset or doc.get("preset") or ""
    if name:
        doc = deep_merge(preset_document(name, scale), doc)
        doc["preset"] = name
    for text in overrides:
        keys, value = parse_override(text)
        apply_override(doc, keys, value)
    if seed is not None:
        doc["seed"] = seed
    cf = validate_document(doc, source)
    return resolve(cf, source, doc)
