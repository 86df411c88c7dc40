"""``fanlab`` command-line entry point.

Every experiment subcommand takes an optional TOML config path, a preset,
``--set key=value`` overrides and ``--seed``. Exit status is 0 only when
every run finished without diverging; failures print one JSON object on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from fanlab import autograd as ag
from fanlab.errors import FanlabError
from fanlab.layers import LayerKind, LayerSpec, count_costs, init_layer

log = logging.getLogger("fanlab")

STUDY_COMMANDS = {"train": "train", "compare": "compare", "sweep-dp": "sweep-dp", "depth": "depth",
                  "bench": "bench"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", type=Path, help="TOML config file")
    p.add_argument("--preset", help="start from a named preset")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. train.epochs=10 or models.0.hidden=64")
    p.add_argument("--out", type=Path, help="output directory (default: $FANLAB_OUTPUT/<name>-<scale>-seed<seed>)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=int, help="parallel runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fanlab", description="FAN layer experiments on synthetic periodic data")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STUDY_COMMANDS:
        _common(sub.add_parser(name, help=f"run a {name} study"))
    run = sub.add_parser("run", help="run a preset exactly as catalogued")
    run.add_argument("preset")
    run.add_argument("--scale", choices=("desk", "paper"), default="desk")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--out", type=Path)
    run.add_argument("--seed", type=int, default=42)
    count = sub.add_parser("count", help="print exact and closed-form parameter/FLOP counts")
    _common(count)
    count.add_argument("--flops-nonlinear", type=int, default=1)
    gc = sub.add_parser("gradcheck", help="finite-difference check of every layer kind")
    gc.add_argument("--seed", type=int, default=42)
    gc.add_argument("--max-dim", type=int, default=32)
    gc.add_argument("--eps", type=float, default=1e-5)
    gc.add_argument("--tol", type=float, default=1e-4)
    sub.add_parser("list-presets", help="list the preset catalog")
    return parser


def _fail(kind: str, message: str, code: int = 2, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def _resolve(args, study_kind: str | None):
    from fanlab.config import parse_config

    overrides = list(args.overrides)
    if study_kind:
        overrides.append(f'study.kind="{study_kind}"')
    if getattr(args, "workers", None):
        overrides.append(f"workers={args.workers}")
    return parse_config(args.config, overrides, preset=args.preset, scale=args.scale, seed=args.seed)


def _out_dir(args, resolved) -> Path:
    from fanlab.reporting import output_root

    if args.out is not None:
        return args.out
    name = resolved.file.preset or (args.config.stem if args.config else "adhoc")
    return output_root() / f"{name}-{args.scale}-seed{args.seed}"


def _finish(bundle) -> int:
    for f in bundle.files:
        print(f)
    if not bundle.ok:
        return _fail("divergence", "runs diverged to non-finite values", 1, runs=bundle.diverged)
    return 0


def cmd_study(args) -> int:
    from fanlab.reporting import run_resolved

    resolved = _resolve(args, STUDY_COMMANDS[args.command])
    if args.command == "train" and any(len(c) != 1 for c in resolved.experiments.values()):
        raise FanlabError("train expects exactly one model; use compare for several")
    return _finish(run_resolved(resolved, _out_dir(args, resolved)))


def cmd_run(args) -> int:
    from fanlab.config import parse_config
    from fanlab.reporting import output_root, run_resolved

    resolved = parse_config(None, args.overrides, preset=args.preset, scale=args.scale, seed=args.seed)
    out = args.out or output_root() / f"{args.preset}-{args.scale}-seed{args.seed}"
    return _finish(run_resolved(resolved, out))


def cmd_count(args) -> int:
    resolved = _resolve(args, None)
    out = []
    seen = set()
    for cfgs in resolved.experiments.values():
        for c in cfgs:
            if c.model.name in seen:
                continue
            seen.add(c.model.name)
            r = count_costs(c.network_spec(), args.flops_nonlinear)
            out.append({"model": c.model.name, "kind": c.model.kind.value, "hidden": c.model.hidden,
                        "exact_params": r.exact_params, "table1_params": r.table1_params,
                        "exact_flops": r.exact_flops, "table1_flops": r.table1_flops})
    print(json.dumps(out, indent=2))
    return 0


def _layer_check(kind: LayerKind, rng, max_dim: int, eps: float) -> tuple[LayerSpec, float]:
    d_in = int(rng.integers(1, max_dim + 1))
    d_out = int(rng.integers(4 if kind in (LayerKind.FAN, LayerKind.GATED_FAN) else 1, max_dim + 1))
    spec = LayerSpec(kind, d_in, d_out)
    layer = init_layer(spec, rng)
    for _, p in layer.named_parameters():
        p.data[...] = rng.uniform(-1.0, 1.0, p.data.shape)
    x = ag.Tensor(rng.standard_normal((d_in, 3)))
    probe = ag.Tensor(rng.standard_normal((1, d_out)))  # random readout so every output row matters
    params = [p for _, p in layer.named_parameters()]

    def loss(tape):
        return ag.sum_all(ag.matmul(probe, layer(x, tape), tape), tape)

    return spec, ag.gradcheck_parameters(loss, params, eps)


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for kind in LayerKind:
        spec, err = _layer_check(kind, rng, args.max_dim, args.eps)
        worst = max(worst, err)
        status = "ok" if err < args.tol else "FAIL"
        print(f"{kind.value:10s} {spec.d_in:3d}x{spec.d_out:<3d} max_rel_err={err:.3e} {status}")
    if worst >= args.tol:
        return _fail("gradcheck", f"max relative error {worst:.3e} >= {args.tol:g}", 1)
    return 0


def cmd_list_presets(args) -> int:
    from fanlab.presets import preset_names

    for name in preset_names():
        print(name)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"run": cmd_run, "count": cmd_count, "gradcheck": cmd_gradcheck, "list-presets": cmd_list_presets}
    handler = handlers.get(args.command, cmd_study)
    try:
        return handler(args)
    except FanlabError as exc:
        return _fail(type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail("OSError", str(exc))


if __name__ == "__main__":
    sys.exit(main())
