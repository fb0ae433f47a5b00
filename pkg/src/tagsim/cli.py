"""Command-line interface for the benchmark pipeline.

Subcommands mirror the pipeline stages::

    tagsim simulate --config cfg.json --out data/
    tagsim register --dataset data/ --input-repr sharp --loss ncc --out runs/sharp_ncc/
    tagsim evaluate --dataset data/ --fields runs/sharp_ncc runs/raw_mse --out report/
    tagsim search   --dataset data/ --input-repr sharp --loss ncc --out search/sharp_ncc/
    tagsim report   --input report/report.csv --out report/table.txt

``--config`` points at an ExperimentConfig JSON; omitted fields keep their
defaults.  ``--seed``, ``--input-repr``, and ``--loss`` override the config
on the command line.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import (
    ExperimentConfig,
    INPUT_REPRS,
    evaluate_dataset,
    export_strain_maps,
    load_config,
    register_dataset,
    run_search,
    simulate_dataset,
    write_report,
)
from .losses import LOSS_KINDS
from .register import RegConfig


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config from --config (or defaults) with CLI overrides applied."""
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "input_repr", None) is not None:
        config = replace(config, input_repr=args.input_repr)
    if getattr(args, "loss", None) is not None:
        loss = config.reg.loss.with_updates(kind=args.loss)
        config = replace(config, reg=replace(config.reg, loss=loss))
    if getattr(args, "reg_config", None):
        import json

        with open(args.reg_config) as handle:
            config = replace(config, reg=RegConfig.from_dict(json.load(handle)))
    return config


def _add_common(parser: argparse.ArgumentParser, *, config=True, seed=True,
                out=True, jobs=False) -> None:
    if config:
        parser.add_argument("--config", type=Path, default=None,
                            help="experiment config JSON")
    if seed:
        parser.add_argument("--seed", type=int, default=None,
                            help="override the config master seed")
    if out:
        parser.add_argument("--out", type=Path, required=True,
                            help="output directory")
    if jobs:
        parser.add_argument("--jobs", type=int, default=1,
                            help="parallel worker count (1 = sequential)")


def _add_method(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input-repr", choices=INPUT_REPRS, default=None,
                        help="registration input representation")
    parser.add_argument("--loss", choices=LOSS_KINDS, default=None,
                        help="similarity loss")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagsim",
        description="Tagged-frame motion benchmark: simulate, register, score.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a movie dataset")
    _add_common(p_sim, jobs=True)

    p_reg = sub.add_parser("register", help="estimate fields for one method")
    _add_common(p_reg, jobs=True)
    _add_method(p_reg)
    p_reg.add_argument("--dataset", type=Path, required=True,
                       help="dataset directory (with manifest.json)")
    p_reg.add_argument("--split", default="test",
                       help="movie split to register (train/val/test/static/all)")
    p_reg.add_argument("--reg-config", type=Path, default=None,
                       help="RegConfig JSON (e.g. a search best.json 'reg' blob)")

    p_eval = sub.add_parser("evaluate", help="score estimated fields")
    _add_common(p_eval, config=False, seed=False)
    p_eval.add_argument("--dataset", type=Path, required=True)
    p_eval.add_argument("--fields", type=Path, nargs="+", required=True,
                        help="one or more registration output directories")

    p_search = sub.add_parser("search", help="random hyperparameter search")
    _add_common(p_search, jobs=True)
    _add_method(p_search)
    p_search.add_argument("--dataset", type=Path, required=True)

    p_rep = sub.add_parser("report", help="format a ranking table")
    p_rep.add_argument("--input", type=Path, required=True,
                       help="evaluation report.csv")
    p_rep.add_argument("--out", type=Path, required=True,
                       help="output text file")
    p_rep.add_argument("--dataset", type=Path, default=None,
                       help="dataset directory (for strain-map export)")
    p_rep.add_argument("--fields", type=Path, default=None,
                       help="registration output directory (for strain maps)")
    p_rep.add_argument("--map-movie", default=None,
                       help="movie name to export strain maps for")
    p_rep.add_argument("--map-frame", type=int, default=None,
                       help="moving frame index for the strain maps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "simulate":
        config = _build_config(args)
        manifest = simulate_dataset(config, args.out, jobs=args.jobs)
        print(f"wrote {len(manifest['movies'])} movies to {args.out}")
        return 0

    if args.command == "register":
        config = _build_config(args)
        meta = register_dataset(args.dataset, config, args.out,
                                split=args.split, jobs=args.jobs)
        print(f"registered split {meta['split']!r} as "
              f"{meta['input_repr']}/{meta['loss']} -> {args.out}")
        return 0

    if args.command == "evaluate":
        report = evaluate_dataset(args.dataset, list(args.fields), args.out)
        methods = ", ".join(sorted(report["summary"]))
        print(f"evaluated {len(report['rows'])} pairs ({methods}) -> {args.out}")
        return 0

    if args.command == "search":
        config = _build_config(args)
        best = run_search(args.dataset, config, args.out, seed=args.seed,
                          jobs=args.jobs)
        print(f"best {config.input_repr}/{best.loss.kind}: "
              f"lambda={best.lambda_:.4g} -> {args.out}")
        return 0

    if args.command == "report":
        text = write_report(args.input, args.out)
        sys.stdout.write(text)
        if args.map_movie is not None:
            if args.dataset is None or args.fields is None:
                raise SystemExit("--map-movie needs --dataset and --fields")
            frame = args.map_frame if args.map_frame is not None else 1
            paths = export_strain_maps(args.dataset, args.fields,
                                       args.map_movie, frame,
                                       args.out.parent)
            print("strain maps: " + ", ".join(p.name for p in paths))
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
