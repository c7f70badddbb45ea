"""Command-line entry point.

Subcommands:

    simulearn synth     --config cfg.ini --out DIR   generate a PNG dataset
    simulearn train     --config cfg.ini --out DIR   run the configured modes
    simulearn sweep     --config cfg.ini --out DIR   lambda sweep + plot
    simulearn evaluate  --config cfg.ini --checkpoint CKPT --out DIR
    simulearn interpret --config cfg.ini --checkpoint CKPT [CKPT ...] --out DIR

``--seed`` restricts the run to a single seed, ``--workers`` and
``--reduce`` override their config values.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .data import save_image_dir, synth_generate
from .errors import CheckpointError, ConfigError, DatasetError, TrainingDivergence
from .experiments import (
    ExperimentConfig,
    evaluate_checkpoint,
    interpret_export,
    lambda_sweep,
    load_config,
    run_experiment,
)
from .experiments.config import DirectoryConfig


def _add_common(parser: argparse.ArgumentParser, *, checkpoint=False, multi_checkpoint=False):
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="restrict to one seed")
    parser.add_argument("--workers", type=int, default=None, help="parallel run count")
    parser.add_argument(
        "--reduce", type=float, default=None,
        help="stratified fraction of the target training set to keep",
    )
    if checkpoint:
        nargs = "+" if multi_checkpoint else None
        parser.add_argument("--checkpoint", required=True, nargs=nargs, help="checkpoint file")


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.reduce is not None:
        if not 0.0 < args.reduce <= 1.0:
            raise ConfigError(f"--reduce must lie in (0, 1], got {args.reduce}")
        overrides["reduce"] = args.reduce
    return dataclasses.replace(config, **overrides) if overrides else config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="simulearn",
        description="Joint-group classifier training experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("synth", help="generate a synthetic PNG dataset"))
    _add_common(sub.add_parser("train", help="run the configured experiment modes"))
    _add_common(sub.add_parser("sweep", help="run the lambda sweep"))
    _add_common(sub.add_parser("evaluate", help="evaluate a checkpoint"), checkpoint=True)
    _add_common(
        sub.add_parser("interpret", help="export interpretability reports"),
        checkpoint=True,
        multi_checkpoint=True,
    )
    args = parser.parse_args(argv)

    try:
        config = _load(args)
        if args.command == "synth":
            if isinstance(config.dataset, DirectoryConfig):
                raise ConfigError(
                    "synth needs a synthetic dataset section", section="dataset", field="source"
                )
            seed = config.dataset_seed if config.dataset_seed is not None else config.seeds[0]
            root = save_image_dir(synth_generate(config.dataset, seed), args.out)
            print(f"wrote synthetic dataset to {root}")
        elif args.command == "train":
            out = run_experiment(config, args.out)
            print(f"wrote experiment results to {out}")
        elif args.command == "sweep":
            out = lambda_sweep(config, args.out)
            print(f"wrote sweep results to {out}")
        elif args.command == "evaluate":
            out = evaluate_checkpoint(args.checkpoint, config, args.out)
            print(f"wrote evaluation report to {out}")
        elif args.command == "interpret":
            out = interpret_export(args.checkpoint, config, args.out)
            print(f"wrote interpretability reports to {out}")
    except (ConfigError, DatasetError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergence as exc:
        print(f"error: {exc} (partial results preserved)", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
