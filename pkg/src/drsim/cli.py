"""Command-line front end: one subcommand per pipeline stage."""

import argparse
import json
import sys
from dataclasses import replace

from . import pipeline


def build_parser():
    parser = argparse.ArgumentParser(
        prog="drsim",
        description="Demand-response simulation: synthesize, cluster, train and score.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic population (consumption, weather, ground truth)"),
        ("ingest", "validate, repair and featurize the raw CSVs"),
        ("cluster", "estimate tariff response profiles and cluster households"),
        ("train", "fit the profile generators per cluster"),
        ("generate", "sample daily profiles for the test days"),
        ("evaluate", "score the generators with proper scoring rules"),
        ("scenario", "generate counterfactual tariff-scenario ensembles"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="YAML run configuration")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the run directory")
        cmd.add_argument("--force", action="store_true", help="rebuild cached outputs")
        cmd.add_argument(
            "--generator",
            choices=pipeline.GENERATOR_NAMES,
            default=None,
            help="restrict train/generate/evaluate/scenario to one generator",
        )
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    config = pipeline.load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, out=args.out)
    paths = pipeline.RunPaths(config.out)
    stage = pipeline.STAGES[args.command]
    if args.command in ("train", "generate", "evaluate", "scenario"):
        written = stage(config, paths, force=args.force, generator=args.generator)
    else:
        written = stage(config, paths, force=args.force)
    if written:
        for path in written:
            print(path)
    else:
        print(f"{args.command}: outputs present, nothing to do (use --force)")
    return 0


def main(argv=None):
    try:
        return run(argv)
    except Exception as exc:  # one machine-readable line on stderr
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
