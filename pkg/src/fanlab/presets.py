"""Named experiment presets at ``desk`` and ``paper`` scale.

Each preset is a config document (same schema as a TOML file). ``paper``
scale swaps in hidden width 2048, 10,000 points per period, lr 1e-5 and
long epoch budgets; it is meant for long unattended runs.
"""

from __future__ import annotations

import copy

from fanlab.errors import ConfigError

_SIN_SPLIT = {
    "train_interval": ["-4pi", "4pi"],
    "test_interval": ["-16pi", "16pi"],
    "points_per_period": 256,
    "period_hint": "2pi",
}

# exp(sin^2(pi x) + cos x + (x mod 3) - 1): components of period 1, 2pi and 3
_COMPLEX_SPLIT = {
    "train_interval": [-12, 12],
    "test_interval": [-36, 36],
    "points_per_period": 64,
    "period_hint": 1,
}

_FAST = {"optimizer": "adamw", "lr": 1e-3, "weight_decay": 0.01}


def _fan(name="FAN", **kw):
    return {"name": name, "kind": "fan", "hidden": 256, "depth": 3, **kw}


def _matched(name, kind, ref="FAN", **kw):
    return {"name": name, "kind": kind, "depth": 3, "match_params": ref, **kw}


_PRESETS: dict[str, dict] = {
    "fig1-sin": {
        "task": {"target": "sin"},
        "split": _SIN_SPLIT,
        "train": {**_FAST, "epochs": 2000, "eval_every": 50},
        "models": [_fan(), _matched("MLP", "mlp")],
        "study": {"kind": "compare", "plots": ["fit-curve", "loss-curve"]},
    },
    "fig3-grid": {
        "tasks": {
            "mod5": {"target": "mod", "modulus": 5},
            "sum_sinusoids": {"target": "sum_sinusoids", "components": [[1, 1, 0], [0.5, 2, 0.3]]},
            "square_wave": {"target": "square_wave", "period": "2pi"},
        },
        "split": {**_SIN_SPLIT, "points_per_period": 128},
        "train": {**_FAST, "epochs": 1000, "eval_every": 50},
        "models": [_fan(), _fan("FAN (Gated)", kind="gated_fan"), _matched("MLP", "mlp")],
        "study": {"kind": "compare", "plots": ["fit-curve"]},
    },
    "fig4-losscurves": {
        "task": {"target": "complex_periodic_a"},
        "split": _COMPLEX_SPLIT,
        "train": {**_FAST, "epochs": 3000, "eval_every": 20},
        "models": [_fan(), _fan("FAN (Gated)", kind="gated_fan"), _matched("MLP", "mlp")],
        "study": {"kind": "compare", "plots": ["loss-curve"]},
    },
    "fig6-fourier-baselines": {
        "task": {"target": "complex_periodic_a"},
        "split": _COMPLEX_SPLIT,
        "train": {**_FAST, "epochs": 2000, "eval_every": 50},
        "models": [
            _fan(),
            _matched("MLP", "mlp"),
            _matched("FNN", "fnn"),
            _matched("MLP (Snake)", "snake"),
            _matched("FSNN", "fsnn"),
        ],
        "study": {"kind": "compare", "plots": ["fit-curve", "loss-curve"]},
    },
    "fig8-extended": {
        "tasks": {
            "complex_b": {"target": "complex_periodic_b"},
            "triangle": {"target": "custom", "custom_id": "triangle"},
            "sin_of_exp_sin": {"target": "custom", "custom_id": "sin_of_exp_sin"},
        },
        "split": {**_SIN_SPLIT, "points_per_period": 128},
        "train": {**_FAST, "epochs": 1000, "eval_every": 50},
        "models": [_fan(), _fan("FAN (Gated)", kind="gated_fan"), _matched("MLP", "mlp")],
        "study": {"kind": "compare", "plots": ["fit-curve"]},
    },
    "appD-snake": {
        "tasks": {
            "sin": {"target": "sin"},
            "sawtooth": {"target": "custom", "custom_id": "sawtooth"},
        },
        "split": {**_SIN_SPLIT, "points_per_period": 128},
        "train": {**_FAST, "epochs": 1000, "eval_every": 50},
        "models": [_fan(), _matched("MLP (Snake)", "snake")],
        "study": {"kind": "compare", "plots": ["fit-curve"]},
    },
    "fig7-dp-sweep": {
        "task": {"target": "sin"},
        "split": _SIN_SPLIT,
        "train": {**_FAST, "epochs": 2000, "eval_every": 100},
        "models": [_fan()],
        "study": {"kind": "sweep-dp", "ratios": [0.0, 0.125, 0.25, 0.375, 0.5], "plots": ["sweep"]},
    },
    "fig9-depth": {
        "task": {"target": "complex_periodic_b"},
        "split": {**_COMPLEX_SPLIT, "points_per_period": 32},
        "train": {**_FAST, "epochs": 600, "eval_every": 50},
        "models": [_fan(hidden=64)],
        "study": {"kind": "depth", "depths": [2, 4, 6, 8], "residual": True, "plots": ["loss-curve"]},
    },
    "table1-accounting": {
        "models": [_fan()],
        "study": {"kind": "accounting", "grid": [16, 64, 256, 1024]},
    },
    "table5-bench": {
        "models": [_fan()],
        "study": {"kind": "bench", "dims": [[1024, 1024], [2048, 2048], [4096, 4096], [8192, 8192]],
                  "repeats": 100},
    },
}

_PAPER_TRAIN = {"lr": 1e-5, "epochs": 20000, "eval_every": 200}


def preset_names() -> list[str]:
    return list(_PRESETS)


def preset_document(name: str, scale: str = "desk") -> dict:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(_PRESETS)}")
    if scale not in ("desk", "paper"):
        raise ConfigError(f"scale must be 'desk' or 'paper', got {scale!r}")
    doc = copy.deepcopy(_PRESETS[name])
    if scale == "paper":
        if "split" in doc:
            doc["split"]["points_per_period"] = 10_000
        if "train" in doc:
            doc["train"].update(_PAPER_TRAIN)
        for m in doc.get("models", []):
            if "hidden" in m:
                m["hidden"] = 2048
    return doc
