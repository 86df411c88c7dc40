"""CSV and SVG emitters plus the preset bundle writer.

Everything written here is a pure function of its inputs: no timestamps,
hostnames or wall-clock values unless explicitly asked for.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from fanlab.layers import LayerKind, LayerSpec, layer_costs
from fanlab.runner import bench_runtime, compare, depth_study, sweep_dp

log = logging.getLogger(__name__)

CSV_HEADER = ["run", "model", "epoch", "train_mse", "id_mse", "ood_mse", "train_mae", "id_mae",
              "ood_mae", "params_exact", "flops_exact", "wall_ms"]

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def fmt(value) -> str:
    """Fixed 9-significant-digit scientific notation; empty for missing."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.8e}"


def csv_text(results, include_timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, r in enumerate(results):
        run = r.config.run or str(i)
        for rec in r.history:
            w.writerow([run, r.name, rec.epoch, fmt(rec.train_mse), fmt(rec.id_test_mse),
                        fmt(rec.ood_test_mse), fmt(rec.train_mae), fmt(rec.id_test_mae),
                        fmt(rec.ood_test_mae), r.costs.exact_params, r.costs.exact_flops,
                        fmt(rec.wall_ms) if include_timing else ""])
    return buf.getvalue()


def emit_csv(results, path, include_timing: bool = False) -> Path:
    """Write the metrics CSV. ``wall_ms`` is left blank unless
    ``include_timing``, which keeps files byte-reproducible."""
    results = list(results)
    if not results:
        raise ValueError("emit_csv needs at least one result")
    path = Path(path)
    path.write_text(csv_text(results, include_timing), newline="")
    return path


def _write_rows(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    Path(path).write_text(buf.getvalue(), newline="")
    return Path(path)


# ---------------------------------------------------------------------------
# SVG


@dataclass
class Frame:
    """Maps data coordinates into a plot rectangle."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    width: int = 720
    height: int = 400
    margin: tuple[int, int, int, int] = (40, 150, 50, 70)  # top, right, bottom, left

    @property
    def left(self):
        return self.margin[3]

    @property
    def right(self):
        return self.width - self.margin[1]

    @property
    def top(self):
        return self.margin[0]

    @property
    def bottom(self):
        return self.height - self.margin[2]

    def px(self, x: float) -> float:
        lo, hi = self.x_range
        return self.left + (x - lo) / (hi - lo) * (self.right - self.left)

    def py(self, y: float) -> float:
        lo, hi = self.y_range
        y = min(max(y, lo), hi)
        return self.bottom - (y - lo) / (hi - lo) * (self.bottom - self.top)


def _c(v: float) -> str:
    return f"{v:.2f}"


def _polyline(frame: Frame, xs, ys, color: str, model: str, dash: str = "", width: float = 1.5) -> str:
    pts = " ".join(f"{_c(frame.px(x))},{_c(frame.py(y))}" for x, y in zip(xs, ys))
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline class="series" data-model="{escape(model)}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{dash_attr} points="{pts}"/>')


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _axes(frame: Frame, title: str, xlabel: str, ylabel: str, y_fmt=lambda v: f"{v:g}") -> list[str]:
    out = [f'<rect x="0" y="0" width="{frame.width}" height="{frame.height}" fill="white"/>',
           f'<text x="{frame.width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<rect class="plot-area" x="{_c(frame.left)}" y="{_c(frame.top)}" '
           f'width="{_c(frame.right - frame.left)}" height="{_c(frame.bottom - frame.top)}" '
           f'fill="none" stroke="#333"/>']
    for t in _nice_ticks(*frame.x_range):
        x = frame.px(t)
        out.append(f'<line x1="{_c(x)}" y1="{_c(frame.bottom)}" x2="{_c(x)}" y2="{_c(frame.bottom + 5)}" stroke="#333"/>')
        out.append(f'<text x="{_c(x)}" y="{_c(frame.bottom + 18)}" text-anchor="middle" font-size="11">{t:g}</text>')
    for t in _nice_ticks(*frame.y_range):
        y = frame.py(t)
        out.append(f'<line x1="{_c(frame.left - 5)}" y1="{_c(y)}" x2="{_c(frame.left)}" y2="{_c(y)}" stroke="#333"/>')
        out.append(f'<text x="{_c(frame.left - 8)}" y="{_c(y + 4)}" text-anchor="end" font-size="11">{escape(y_fmt(t))}</text>')
    out.append(f'<text x="{_c((frame.left + frame.right) / 2)}" y="{frame.height - 12}" '
               f'text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{_c((frame.top + frame.bottom) / 2)}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {_c((frame.top + frame.bottom) / 2)})">{escape(ylabel)}</text>')
    return out


def _legend(frame: Frame, entries) -> list[str]:
    out = []
    x = frame.right + 12
    for i, (label, color, dash) in enumerate(entries):
        y = frame.top + 14 + 18 * i
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<g class="legend-entry" data-label="{escape(label)}">'
                   f'<line x1="{_c(x)}" y1="{_c(y - 4)}" x2="{_c(x + 22)}" y2="{_c(y - 4)}" '
                   f'stroke="{color}" stroke-width="2"{dash_attr}/>'
                   f'<text x="{_c(x + 28)}" y="{_c(y)}" font-size="11">{escape(label)}</text></g>')
    return out


def _document(frame: Frame, body: list[str]) -> str:
    return ("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.width}" height="{frame.height}" '
            f'viewBox="0 0 {frame.width} {frame.height}">\n' + "\n".join(body) + "\n</svg>\n")


def fit_curve_svg(results, title: str = "") -> str:
    """Target vs. each model's prediction over the whole test interval with
    the training interval shaded."""
    ref = results[0]
    ds, split = ref.dataset, ref.config.split
    order = np.argsort(ds.inputs.data[0], kind="stable")
    xs = ds.inputs.data[0][order]
    ys = ds.targets.data[0][order]
    pad = 0.25 * (ys.max() - ys.min() or 1.0)
    frame = Frame((split.test_interval[0], split.test_interval[1]), (ys.min() - pad, ys.max() + pad))
    body = _axes(frame, title or "fit", "x", "y")
    lo, hi = split.train_interval
    body.append(f'<rect class="train-region" x="{_c(frame.px(lo))}" y="{_c(frame.top)}" '
                f'width="{_c(frame.px(hi) - frame.px(lo))}" height="{_c(frame.bottom - frame.top)}" '
                f'fill="#2ca02c" fill-opacity="0.12"/>')
    body.append(_polyline(frame, xs, ys, "#000000", "target", width=1.0))
    entries = [("target", "#000000", "")]
    for i, r in enumerate(results):
        if r.network is None:
            continue
        color = PALETTE[i % len(PALETTE)]
        pred = r.network.predict(ds.inputs.data[:, order])[0]
        body.append(_polyline(frame, xs, pred, color, r.name))
        entries.append((r.name, color, ""))
    body.extend(_legend(frame, entries))
    return _document(frame, body)


def _log10(v):
    return math.log10(max(v, 1e-300))


def loss_curve_svg(results, title: str = "") -> str:
    """log10 MSE vs. epoch: training loss solid, OOD test loss dashed."""
    series = []
    for i, r in enumerate(results):
        color = PALETTE[i % len(PALETTE)]
        epochs = [rec.epoch for rec in r.history]
        series.append((r.name + " train", color, "", epochs, [_log10(rec.train_mse) for rec in r.history]))
        if r.history and r.history[0].ood_test_mse is not None:
            series.append((r.name + " OOD", color, "5,3", epochs,
                           [_log10(rec.ood_test_mse) for rec in r.history]))
    all_y = [y for s in series for y in s[4]] or [0.0]
    all_x = [x for s in series for x in s[3]] or [0, 1]
    y_lo, y_hi = math.floor(min(all_y)), math.ceil(max(all_y))
    if y_hi == y_lo:
        y_hi += 1
    frame = Frame((min(all_x), max(all_x) if max(all_x) > min(all_x) else min(all_x) + 1), (y_lo, y_hi))
    body = _axes(frame, title or "loss", "epoch", "MSE", y_fmt=lambda v: f"1e{v:g}")
    for label, color, dash, xs, ys in series:
        body.append(_polyline(frame, xs, ys, color, label, dash))
    body.extend(_legend(frame, [(label, color, dash) for label, color, dash, _, _ in series]))
    return _document(frame, body)


def sweep_svg(rows, title: str = "") -> str:
    """Final ID/OOD MSE (log10) against the d_p ratio."""
    ratios = [row.ratio for row in rows]
    finals = [row.result.final for row in rows]
    lines = [("ID test", "#2ca02c", [_log10(f.id_test_mse) for f in finals]),
             ("OOD test", "#1f77b4", [_log10(f.ood_test_mse) for f in finals]),
             ("train", "#7f7f7f", [_log10(f.train_mse) for f in finals])]
    all_y = [y for _, _, ys in lines for y in ys]
    frame = Frame((min(ratios), max(ratios) if max(ratios) > min(ratios) else min(ratios) + 1),
                  (math.floor(min(all_y)), math.ceil(max(all_y)) + (0 if max(all_y) > min(all_y) else 1)))
    body = _axes(frame, title or "d_p sweep", "d_p / d_out", "final MSE", y_fmt=lambda v: f"1e{v:g}")
    for label, color, ys in lines:
        body.append(_polyline(frame, ratios, ys, color, label))
        for x, y in zip(ratios, ys):
            body.append(f'<circle cx="{_c(frame.px(x))}" cy="{_c(frame.py(y))}" r="3" fill="{color}"/>')
    body.extend(_legend(frame, [(label, color, "") for label, color, _ in lines]))
    return _document(frame, body)


def emit_svg_plot(results, kind: str, path, title: str = "") -> Path:
    results = list(results)
    if not results:
        raise ValueError("emit_svg_plot needs results")
    if kind == "fit-curve":
        text = fit_curve_svg(results, title)
    elif kind == "loss-curve":
        text = loss_curve_svg(results, title)
    elif kind == "sweep":
        text = sweep_svg(results, title)
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    path = Path(path)
    path.write_text(text, newline="")
    return path


# ---------------------------------------------------------------------------
# tables


def accounting_rows(grid, ratio: float = 0.25, flops_nonlinear: int = 1):
    """Exact vs. closed-form counts for MLP and FAN layers with d_in = d_out."""
    rows = []
    for d in grid:
        d_p = int(ratio * d)
        mlp = layer_costs(LayerSpec(LayerKind.MLP, d, d), flops_nonlinear)
        fan = layer_costs(LayerSpec(LayerKind.FAN, d, d, d_p=d_p), flops_nonlinear)
        rows.append([d, d, d_p,
                     mlp.exact_params, mlp.table1_params,
                     fan.exact_params, fan.table1_params, fan.table1_params - fan.exact_params,
                     mlp.exact_matmul_flops, fan.exact_matmul_flops, fan.table1_matmul_flops,
                     mlp.exact_flops, mlp.table1_flops, fan.exact_flops, fan.table1_flops])
    return rows


ACCOUNTING_HEADER = ["d_in", "d_out", "d_p", "mlp_params_exact", "mlp_params_table1", "fan_params_exact",
                     "fan_params_table1", "fan_param_gap", "mlp_matmul_flops", "fan_matmul_flops_exact",
                     "fan_matmul_flops_table1", "mlp_flops_exact", "mlp_flops_table1", "fan_flops_exact",
                     "fan_flops_table1"]


# ---------------------------------------------------------------------------
# bundles


@dataclass
class Bundle:
    directory: Path
    files: list[Path] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    diverged: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diverged


def output_root() -> Path:
    return Path(os.environ.get("FANLAB_OUTPUT", "runs"))


def _collect_diverged(bundle: Bundle, results) -> None:
    bundle.diverged.extend(f"{r.config.run}:{r.name}" for r in results if r.diverged)


def run_resolved(resolved, directory, label_prefix: str = "") -> Bundle:
    """Execute the study in ``resolved`` and write CSV/SVG/config echo into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(directory)
    study = resolved.study
    echo = directory / "resolved_config.json"
    echo.write_text(resolved.echo(), newline="")
    bundle.files.append(echo)
    workers = resolved.file.workers

    if study.kind == "accounting":
        bundle.files.append(_write_rows(directory / "accounting.csv", ACCOUNTING_HEADER,
                                        accounting_rows(study.grid)))
        return bundle
    if study.kind == "bench":
        dims = [tuple(d) for d in study.dims]
        rows = bench_runtime(dims, repeats=study.repeats, seed=resolved.seed)
        bundle.files.append(_write_rows(directory / "bench_flops.csv",
                                        ["kind", "d_in", "d_out", "params_exact", "flops_exact", "matmul_flops"],
                                        [[r.kind, r.d_in, r.d_out, r.params, r.exact_flops, r.matmul_flops]
                                         for r in rows]))
        # wall-clock timings are hardware dependent and kept out of the reproducible files
        timings = directory / "bench_timings.json"
        timings.write_text(json.dumps([r.__dict__ for r in rows], indent=2) + "\n")
        bundle.files.append(timings)
        bundle.results["bench"] = rows
        return bundle

    multi = len(resolved.experiments) > 1
    for label, configs in resolved.experiments.items():
        stem = f"{label}-" if multi else ""
        title = label if multi else (resolved.file.preset or label)
        if study.kind in ("compare", "train"):
            results = compare(configs, workers=workers).results
            bundle.results[label] = results
            _collect_diverged(bundle, results)
            bundle.files.append(emit_csv(results, directory / f"{stem}metrics.csv"))
            plottable = [r for r in results if r.network is not None]
            if "fit-curve" in study.plots and plottable and not _is_symbolic(configs[0]):
                bundle.files.append(emit_svg_plot(plottable, "fit-curve", directory / f"{stem}fit.svg", title))
            if "loss-curve" in study.plots:
                bundle.files.append(emit_svg_plot(results, "loss-curve", directory / f"{stem}loss.svg", title))
        elif study.kind == "sweep-dp":
            rows = sweep_dp(configs[0], [float(r) for r in study.ratios], workers=workers)
            bundle.results[label] = rows
            results = [row.result for row in rows]
            _collect_diverged(bundle, results)
            bundle.files.append(emit_csv(results, directory / f"{stem}metrics.csv"))
            bundle.files.append(_write_rows(
                directory / f"{stem}sweep.csv",
                ["ratio", "d_p", "train_mse", "id_mse", "ood_mse", "params_exact"],
                [[fmt(row.ratio), row.d_p, row.result.final.train_mse, row.result.final.id_test_mse,
                  row.result.final.ood_test_mse, row.result.costs.exact_params] for row in rows]))
            if "sweep" in study.plots and not any(r.diverged for r in results):
                bundle.files.append(emit_svg_plot(rows, "sweep", directory / f"{stem}sweep.svg", title))
        elif study.kind == "depth":
            rows = depth_study(configs[0], study.depths, study.residual, workers=workers)
            bundle.results[label] = rows
            results = [row.result for row in rows]
            _collect_diverged(bundle, results)
            bundle.files.append(emit_csv(results, directory / f"{stem}metrics.csv"))
            bundle.files.append(_write_rows(
                directory / f"{stem}depth.csv",
                ["depth", "params_exact", "best_train_mse", "best_id_mse", "best_ood_mse"],
                [[row.depth, row.params, row.best_train_mse, row.best_id_mse, row.best_ood_mse] for row in rows]))
            if "loss-curve" in study.plots:
                bundle.files.append(emit_svg_plot(results, "loss-curve", directory / f"{stem}loss.svg", title))
    return bundle


def _is_symbolic(config) -> bool:
    return config.split is None


def run_preset(name: str, scale: str = "desk", seed: int = 42, out_root=None, overrides=()) -> Bundle:
    """Run every experiment of preset ``name`` into ``<out_root>/<name>-<scale>-seed<seed>/``."""
    from fanlab.config import parse_config

    resolved = parse_config(None, overrides, preset=name, scale=scale, seed=seed)
    root = Path(out_root) if out_root is not None else output_root()
    return run_resolved(resolved, root / f"{name}-{scale}-seed{seed}")
