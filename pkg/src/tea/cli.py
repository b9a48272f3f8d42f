"""Command-line entry points: generate-data, train, eval, sweep, report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_generator_config, load_run_config, parse_ratios
from .metrics import EvalReport
from .synthetic import generate_synthetic_dataset
from .trainer import evaluate_checkpoint, fit


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tea",
        description="Temporal-adaptive segmentation of satellite image time series")
    sub = parser.add_subparsers(dest="verb", required=True)

    gen = sub.add_parser("generate-data", help="write a synthetic corpus")
    gen.add_argument("--config", required=True, type=Path)
    gen.add_argument("--out", required=True, type=Path)
    gen.add_argument("--seed", required=True, type=int)

    train = sub.add_parser("train", help="train per a run config file")
    train.add_argument("--config", required=True, type=Path)
    train.add_argument("--eval-ratios", type=str, default=None,
                       help="override validation ratios, e.g. 0.1..1.0")
    train.add_argument("--sweep-lengths", type=str, default=None)
    train.add_argument("--sweep-step", type=float, default=None)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint at prefix ratios")
    evaluate.add_argument("--checkpoint", required=True, type=Path)
    evaluate.add_argument("--data", required=True, type=Path)
    evaluate.add_argument("--ratios", type=str, default="0.1..1.0")
    evaluate.add_argument("--split", default="test", choices=("train", "val", "test"))
    evaluate.add_argument("--out", type=Path, default=None,
                          help="report path (JSON; a CSV twin is written next to it)")

    swp = sub.add_parser("sweep", help="sliding-window robustness grid")
    swp.add_argument("--checkpoint", required=True, type=Path)
    swp.add_argument("--data", required=True, type=Path)
    swp.add_argument("--lengths", type=str, default="0.1,0.2,0.4,0.8")
    swp.add_argument("--step", type=float, default=0.1)
    swp.add_argument("--split", default="test", choices=("train", "val", "test"))
    swp.add_argument("--out", type=Path, default=None)

    rep = sub.add_parser("report", help="render a saved evaluation report")
    rep.add_argument("--in", dest="path", required=True, type=Path)
    group = rep.add_mutually_exclusive_group()
    group.add_argument("--csv", type=Path, default=None,
                       help="write the flat CSV to this path")
    group.add_argument("--table", action="store_true",
                       help="print the text table (default)")
    return parser


def _write_report(report: EvalReport, out: Path) -> None:
    report.save(out)
    report.to_csv(out.with_suffix(".csv"))
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    print(report.render_table())


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.verb == "generate-data":
        recipe = load_generator_config(args.config)
        manifest = generate_synthetic_dataset(
            specs=recipe.specs, geometry=recipe.geometry,
            n_samples=recipe.n_samples, seed=args.seed, out_dir=args.out,
            priors=recipe.priors, split_ratios=recipe.split_ratios,
            start_date=recipe.start_date)
        print(f"wrote {manifest.n_samples} samples to {manifest.root}")
        return 0

    if args.verb == "train":
        config = load_run_config(args.config)
        if args.eval_ratios is not None:
            config.eval_ratios = parse_ratios(args.eval_ratios)
        if args.sweep_lengths is not None:
            config.sweep_lengths = parse_ratios(args.sweep_lengths)
        if args.sweep_step is not None:
            config.sweep_step = args.sweep_step
        best = fit(config)
        print(f"best checkpoint: {best}")
        if config.sweep_lengths:
            report = evaluate_checkpoint(best, Path(config.data_dir),
                                         config.eval_ratios, split="val",
                                         sweep_lengths=config.sweep_lengths,
                                         sweep_step=config.sweep_step)
            _write_report(report, best.parent / "sweep_val.json")
        return 0

    if args.verb == "eval":
        report = evaluate_checkpoint(args.checkpoint, args.data,
                                     parse_ratios(args.ratios), split=args.split)
        out = args.out or args.checkpoint.parent / f"eval_{args.split}.json"
        _write_report(report, out)
        return 0

    if args.verb == "sweep":
        report = evaluate_checkpoint(args.checkpoint, args.data,
                                     ratios=(1.0,), split=args.split,
                                     sweep_lengths=parse_ratios(args.lengths),
                                     sweep_step=args.step)
        out = args.out or args.checkpoint.parent / f"sweep_{args.split}.json"
        _write_report(report, out)
        return 0

    if args.verb == "report":
        report = EvalReport.load(args.path)
        if args.csv is not None:
            report.to_csv(args.csv)
            print(f"wrote {args.csv}")
        else:
            print(report.render_table())
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
