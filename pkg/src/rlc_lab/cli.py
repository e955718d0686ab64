"""rlc-lab command line: gen, train, sweep, plot, verify."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .diffcore import ConfigurationError
from .experiments import (
    ExperimentConfig,
    _make_split,
    _train_model,
    config_dict,
    emit_csv,
    emit_svg_plot,
    read_csv,
    run_sweep,
)
from .tasks import save_dataset


def _sizes(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    common.add_argument("--experiment", choices=["sorting", "sign", "connectivity"])
    common.add_argument("--sizes", type=_sizes, help="comma-separated set sizes d or vertex counts n")
    common.add_argument("--runs", type=int, help="seeds per size (default 5)")
    common.add_argument("--hidden", type=int, help="hidden width (default 5 for sets, 2 for graphs)")
    common.add_argument("--ood", action="store_true", default=None, help="also test on larger inputs")
    common.add_argument("--out", help="output directory (default results)")
    common.add_argument("--seed", type=int, help="first seed; runs use seed, seed+1, ...")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rlc-lab", description="Randomized linear classifier experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write train/validation/test files for every (size, seed)")
    sub.add_parser("train", parents=[common], help="train every model once per (size, seed), write JSON reports")
    sub.add_parser("sweep", parents=[common], help="full sweep: results.csv and results.svg")
    plot = sub.add_parser("plot", parents=[common], help="redraw the SVG from an existing results.csv")
    plot.add_argument("--csv", help="CSV to plot (default <out>/results.csv)")
    ver = sub.add_parser("verify", parents=[common], help="run the non-training property suite")
    ver.add_argument("--inject-gradient-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    ver.add_argument("--quick", action="store_true", help="fewer Monte-Carlo draws")
    return p


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
    overrides = {
        "experiment": args.experiment,
        "size_grid": args.sizes,
        "runs": args.runs,
        "hidden_width": args.hidden,
        "ood": args.ood,
        "out": args.out,
        "seed": args.seed,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(base)


def cmd_gen(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    for size in cfg.size_grid:
        for seed in cfg.seeds:
            split, ood = _make_split(cfg, size, seed)
            d = out / "data" / f"{cfg.experiment}-{size}-seed{seed}"
            d.mkdir(parents=True, exist_ok=True)
            for name in ("train", "validation", "test"):
                save_dataset(getattr(split, name), d / f"{name}.txt")
            if ood is not None:
                save_dataset(ood, d / "ood.txt")
            print(d)
    return 0


def cmd_train(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    for size in cfg.size_grid:
        for seed in cfg.seeds:
            split, _ = _make_split(cfg, size, seed)
            for name in cfg.models:
                _, report = _train_model(cfg, name, split, seed)
                path = out / f"{cfg.experiment}-{name}-{size}-seed{seed}.json"
                path.write_text(report.to_json() + "\n")
                print(f"{path}  test_acc={report.test_acc:.4f}")
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    results = run_sweep(cfg)
    csv_path = emit_csv(results, out / "results.csv")
    svg_path = emit_svg_plot(results, out / "results.svg")
    (out / "config.json").write_text(json.dumps(config_dict(cfg), indent=2, sort_keys=True) + "\n")
    print(csv_path)
    print(svg_path)
    return 0


def cmd_plot(cfg: ExperimentConfig, csv_file: str | None) -> int:
    src = Path(csv_file) if csv_file else Path(cfg.out) / "results.csv"
    if not src.exists():
        raise ConfigurationError(f"no results at {src}")
    print(emit_svg_plot(read_csv(src), src.with_suffix(".svg")))
    return 0


def cmd_verify(seed: int, fault: float, quick: bool) -> int:
    from .checks import verify

    results = verify(seed, inject_gradient_fault=fault, quick=quick)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args.seed or 0, args.inject_gradient_fault, args.quick)
        cfg = load_config(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_plot(cfg, args.csv)
    except ConfigurationError as exc:
        print(f"rlc-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
