"""Sweeps over set/graph sizes and seeds, with CSV and SVG output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .baselines import DeepSetsSpec, GinSpec
from .diffcore import ConfigurationError
from .tasks import DEFAULT_SIZES, gen_connectivity_dataset, gen_set_dataset, ood_set_size
from .training import (
    TrainConfig,
    constant_classifier_accuracy,
    evaluate,
    fit_constant,
    train_baseline,
    train_rlc,
)

log = logging.getLogger(__name__)

EXPERIMENTS = ("sorting", "sign", "connectivity")
DEFAULT_GRIDS = {"sorting": [5, 9, 15], "sign": [5, 9, 15], "connectivity": [10, 20, 30]}
DEFAULT_HIDDEN = {"sorting": 5, "sign": 5, "connectivity": 2}
CSV_HEADER = ["experiment", "model", "size", "seed", "test_acc", "ood_acc", "param_count", "const_acc"]

# learning rate, batch size
HYPERPARAMS = {
    "rsetc": (0.5, 250),
    "rgraphc": (0.5, 100),
    "deepsets": (0.001, 250),
    "deepsets2": (0.001, 250),
    "gin": (0.01, 100),
}


@dataclass
class ExperimentConfig:
    experiment: str = "sorting"
    size_grid: list[int] = field(default_factory=list)
    hidden_width: int | None = None
    runs: int = 5
    ood: bool = False
    seed: int = 0
    out: str = "results"
    max_epochs: int = 1000
    patience: int = 30
    amplification: int = 1000
    eval_majority_m: int = 1001
    split_sizes: tuple[int, int, int] = DEFAULT_SIZES

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}")
        if not self.size_grid:
            self.size_grid = list(DEFAULT_GRIDS[self.experiment])
        if self.hidden_width is None:
            self.hidden_width = DEFAULT_HIDDEN[self.experiment]
        self.split_sizes = tuple(self.split_sizes)
        if self.runs < 1:
            raise ConfigurationError("runs must be at least 1")
        if self.experiment != "connectivity" and any(d % 2 == 0 or d < 1 for d in self.size_grid):
            raise ConfigurationError("set sizes must be odd")
        if self.experiment == "connectivity" and any(n < 3 for n in self.size_grid):
            raise ConfigurationError("graph sizes must be at least 3")

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.runs)]

    @property
    def models(self) -> list[str]:
        if self.experiment == "connectivity":
            return ["rgraphc", "gin"]
        if self.experiment == "sign":
            return ["rsetc", "deepsets", "deepsets2"]
        return ["rsetc", "deepsets"]

    def train_config(self, model: str, seed: int) -> TrainConfig:
        lr, batch = HYPERPARAMS[model]
        return TrainConfig(
            learning_rate=lr,
            batch_size=batch,
            max_epochs=self.max_epochs,
            patience=self.patience,
            amplification=self.amplification,
            eval_majority_m=self.eval_majority_m,
            seed=seed,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RunResult:
    experiment: str
    model: str
    size: int
    seed: int
    test_acc: float
    ood_acc: float | None
    param_count: int
    const_acc: float


def _make_split(cfg: ExperimentConfig, size: int, seed: int):
    if cfg.experiment == "connectivity":
        split = gen_connectivity_dataset(size, cfg.split_sizes, seed)
        ood = gen_connectivity_dataset(2 * size, (0, 0, cfg.split_sizes[2]), seed).test if cfg.ood else None
    else:
        split = gen_set_dataset(cfg.experiment, size, cfg.split_sizes, seed)
        ood = gen_set_dataset(cfg.experiment, size, (0, 0, cfg.split_sizes[2]), seed, ood_size=ood_set_size(size)).test if cfg.ood else None
    return split, ood


def _train_model(cfg: ExperimentConfig, name: str, split, seed: int):
    tc = cfg.train_config(name, seed)
    h = cfg.hidden_width
    if name == "rsetc":
        return train_rlc(split, "rsetc", {"hidden": h}, tc)
    if name == "rgraphc":
        return train_rlc(split, "rgraphc", {"hidden": (h, h, h)}, tc)
    if name == "deepsets":
        return train_baseline(split, DeepSetsSpec(hidden=h, depth=1), tc)
    if name == "deepsets2":
        return train_baseline(split, DeepSetsSpec(hidden=h, depth=2), tc)
    if name == "gin":
        return train_baseline(split, GinSpec(hidden=h), tc)
    raise ConfigurationError(f"unknown model {name!r}")


def run_cell(cfg: ExperimentConfig, size: int, seed: int) -> list[RunResult]:
    """Train and evaluate every model of the experiment on one (size, seed) split."""
    split, ood = _make_split(cfg, size, seed)
    const = fit_constant(split.train)
    const_acc = evaluate(const, split.test)
    rows = []
    for name in cfg.models:
        try:
            model, report = _train_model(cfg, name, split, seed)
            ood_acc = evaluate(model, ood, cfg.eval_majority_m, seed * 1000 + 13) if ood is not None else None
            rows.append(RunResult(cfg.experiment, name, size, seed, report.test_acc, ood_acc, report.param_count, const_acc))
            log.info("%s %s size=%d seed=%d test=%.3f epochs=%d", cfg.experiment, name, size, seed, report.test_acc, report.epochs_run)
        except Exception as exc:  # recorded, sweep continues
            log.error("%s %s size=%d seed=%d failed: %s", cfg.experiment, name, size, seed, exc)
            rows.append(RunResult(cfg.experiment, name, size, seed, float("nan"), None, 0, const_acc))
    const_ood = constant_classifier_accuracy(ood, split.train) if ood is not None else None
    rows.append(RunResult(cfg.experiment, "constant", size, seed, const_acc, const_ood, 0, const_acc))
    return rows


def _worker_count() -> int:
    raw = os.environ.get("RLC_LAB_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            return max(1, min(int(raw), cap))
        except ValueError:
            raise ConfigurationError(f"RLC_LAB_THREADS must be an integer, got {raw!r}") from None
    return cap


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[RunResult]:
    """All (size, seed) cells; results come back in grid order regardless of scheduling."""
    cells = [(size, seed) for size in cfg.size_grid for seed in cfg.seeds]
    workers = _worker_count() if workers is None else workers
    if workers <= 1 or len(cells) == 1:
        chunks = [run_cell(cfg, s, sd) for s, sd in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_cell, [cfg] * len(cells), *zip(*cells)))
    return [row for chunk in chunks for row in chunk]


# -- CSV --------------------------------------------------------------------


def _num(v: float | None) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return f"{v:.4f}"


def csv_text(results: list[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        w.writerow([r.experiment, r.model, r.size, r.seed, _num(r.test_acc), _num(r.ood_acc), r.param_count, _num(r.const_acc)])
    return buf.getvalue()


def emit_csv(results: list[RunResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(results))
    return path


def read_csv(path: str | Path) -> list[RunResult]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        RunResult(
            r["experiment"],
            r["model"],
            int(r["size"]),
            int(r["seed"]),
            float(r["test_acc"]),
            float(r["ood_acc"]) if r["ood_acc"] else None,
            int(r["param_count"]),
            float(r["const_acc"]),
        )
        for r in rows
    ]


# -- summaries and SVG ------------------------------------------------------


def summarize(results: list[RunResult]) -> dict[tuple[str, str, str, int], tuple[float, float, int]]:
    """(experiment, metric, model, size) -> (mean, sample std, runs); NaN runs dropped."""
    groups: dict[tuple[str, str, str, int], list[float]] = {}
    for r in results:
        for metric in ("test_acc", "ood_acc"):
            v = getattr(r, metric)
            if v is None or math.isnan(v):
                continue
            groups.setdefault((r.experiment, metric, r.model, r.size), []).append(v)
    out = {}
    for key, vals in groups.items():
        arr = np.asarray(vals)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        out[key] = (round(float(arr.mean()), 4), round(std, 4), len(arr))
    return out


PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
WIDTH, HEIGHT = 800, 600


def svg_text(results: list[RunResult]) -> str:
    stats = summarize(results)
    panels = sorted({(e, m) for e, m, _, _ in stats}, key=lambda p: (p[0], p[1] != "test_acc"))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if not panels:
        parts.append('<text x="400" y="300" text-anchor="middle" font-family="sans-serif">no results</text>')
    n = max(len(panels), 1)
    pw = WIDTH / n
    for k, (exp, metric) in enumerate(panels):
        parts.extend(_panel(stats, exp, metric, k * pw, pw))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _panel(stats, exp: str, metric: str, x0: float, pw: float) -> list[str]:
    left, right, top, bottom = x0 + 60, x0 + pw - 20, 60, HEIGHT - 70
    keys = [k for k in stats if k[0] == exp and k[1] == metric]
    sizes = sorted({k[3] for k in keys})
    models = sorted({k[2] for k in keys}, key=lambda m: (m == "constant", m))

    def sx(size):
        if len(sizes) == 1:
            return (left + right) / 2
        return left + (right - left) * sizes.index(size) / (len(sizes) - 1)

    def sy(v):
        return bottom - (bottom - top) * v

    title = f"{exp} ({'in-distribution' if metric == 'test_acc' else 'out-of-distribution'})"
    out = [
        f'<g class="panel" data-experiment="{escape(exp)}" data-metric="{metric}">',
        f'<text x="{(left + right) / 2:.1f}" y="30" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{left:.1f}" y1="{bottom:.1f}" x2="{right:.1f}" y2="{bottom:.1f}" stroke="black"/>',
        f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" y2="{bottom:.1f}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        out.append(f'<text x="{left - 8:.1f}" y="{y + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="11">{tick:.2f}</text>')
        out.append(f'<line x1="{left:.1f}" y1="{y:.1f}" x2="{right:.1f}" y2="{y:.1f}" stroke="#dddddd"/>')
    for s in sizes:
        out.append(f'<text x="{sx(s):.1f}" y="{bottom + 18:.1f}" text-anchor="middle" font-family="sans-serif" font-size="11">{s}</text>')
    out.append(f'<text x="{(left + right) / 2:.1f}" y="{bottom + 40:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12">size</text>')
    out.append(f'<text x="{x0 + 16:.1f}" y="{(top + bottom) / 2:.1f}" transform="rotate(-90 {x0 + 16:.1f} {(top + bottom) / 2:.1f})" text-anchor="middle" font-family="sans-serif" font-size="12">mean accuracy</text>')
    for i, model in enumerate(models):
        color = "#777777" if model == "constant" else PALETTE[i % len(PALETTE)]
        pts = [(s, *stats[(exp, metric, model, s)]) for s in sizes if (exp, metric, model, s) in stats]
        dash = ' stroke-dasharray="6 4"' if model == "constant" else ""
        coords = " ".join(f"{sx(s):.1f},{sy(mu):.1f}" for s, mu, _, _ in pts)
        out.append(f'<polyline class="series" data-model="{escape(model)}" points="{coords}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
        for s, mu, sd, nr in pts:
            cx = sx(s)
            out.append(f'<line class="errbar" x1="{cx:.1f}" y1="{sy(mu - sd):.1f}" x2="{cx:.1f}" y2="{sy(mu + sd):.1f}" stroke="{color}"/>')
            out.append(
                f'<circle class="point" cx="{cx:.1f}" cy="{sy(mu):.1f}" r="4" fill="{color}" '
                f'data-model="{escape(model)}" data-size="{s}" data-mean="{mu:.4f}" data-std="{sd:.4f}" data-runs="{nr}"/>'
            )
        ly = top + 16 * i
        out.append(f'<line x1="{right - 110:.1f}" y1="{ly:.1f}" x2="{right - 90:.1f}" y2="{ly:.1f}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{right - 85:.1f}" y="{ly + 4:.1f}" font-family="sans-serif" font-size="11">{escape(model)}</text>')
    out.append("</g>")
    return out


def emit_svg_plot(results: list[RunResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_text(results))
    return path


def config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["split_sizes"] = list(d["split_sizes"])
    return d
