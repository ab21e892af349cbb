"""``umhi`` command line: ingest, analyze, embed, pretrain, train, evaluate, predict, synth, report."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .graph import ParseError
from .pipeline import (ArtifactError, Layout, RunManifest, run_analyze, run_embed, run_evaluate, run_ingest,
                       run_predict, run_pretrain, run_report, run_synth, run_train, timed)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
OUT_ENV = "UMHI_OUT"
COMMANDS = ("ingest", "analyze", "embed", "pretrain", "train", "evaluate", "predict", "synth", "report")
_GLOBAL_KEYS = {"seed", "workers", "out"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for f in fields(ExperimentConfig):
        if f.name in _GLOBAL_KEYS:
            continue
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar=f.name.upper(),
                           default=None, help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="flat 'key = value' config file")
    common.add_argument("--seed", type=int, help="master seed for every random substream")
    common.add_argument("--workers", type=int, help="worker threads for embedding training")
    common.add_argument("--out", type=Path, help=f"run directory (default ${OUT_ENV} or umhi-run)")
    common.add_argument("-v", "--verbose", action="store_true")
    _config_flags(common)

    parser = _Parser(prog="umhi", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "predict":
            p.add_argument("--pairs", type=Path, required=True, help="tab-separated follower/followee names")
            p.add_argument("--output", type=Path, help="default: <out>/predictions.tsv")
        elif name == "synth":
            p.add_argument("--users", type=int, default=2000)
            p.add_argument("--communities", type=int)
            p.add_argument("--pairs", type=int, dest="target_pairs")
            p.add_argument("--published-dims", action="store_true",
                           help="keep published encoder sizes instead of the desk profile")
        elif name == "evaluate":
            p.add_argument("--sweep", action="store_true", help="also run the training-fraction sweep")
    return parser


def resolve_config(args) -> tuple[ExperimentConfig, Layout]:
    out = args.out or (Path(os.environ[OUT_ENV]) if os.environ.get(OUT_ENV) else None)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    config_path = args.config
    if config_path is None and args.command != "synth":
        default = (out or Path(ExperimentConfig.out)) / "config.txt"
        config_path = default if default.exists() else None
    if config_path is not None and not Path(config_path).exists():
        raise ArtifactError(f"missing input artifact: {config_path}")
    cfg = load_config(config_path, **overrides)
    if out is not None:
        cfg = cfg.with_overrides(out=str(out))
    return cfg, Layout(cfg.out)


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "umhi: error: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg, layout = resolve_config(args)
        cfg.method_list  # validates the method names early
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"umhi: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArtifactError as exc:
        print(f"umhi: {exc}", file=sys.stderr)
        return EXIT_DATA

    cmd = args.command
    try:
        summary = None
        if cmd == "report":
            sys.stdout.buffer.write(run_report(layout))
            sys.stdout.flush()
            return EXIT_OK
        if cmd == "synth":
            artifacts, secs = timed(run_synth, cfg, layout, args.users, args.communities, args.target_pairs,
                                    not args.published_dims)
            cfg = load_config(layout.root / "config.txt")
        elif cmd == "ingest":
            artifacts, secs = timed(run_ingest, cfg, layout)
        elif cmd == "analyze":
            artifacts, secs = timed(run_analyze, cfg, layout)
        elif cmd == "embed":
            artifacts, secs = timed(run_embed, cfg, layout)
        elif cmd == "pretrain":
            artifacts, secs = timed(run_pretrain, cfg, layout)
        elif cmd == "train":
            artifacts, secs = timed(run_train, cfg, layout)
        elif cmd == "predict":
            dest = args.output or layout.root / "predictions.tsv"
            artifacts, secs = timed(run_predict, cfg, layout, args.pairs, dest)
        else:
            (artifacts, summary), secs = timed(run_evaluate, cfg, layout, args.sweep)
        RunManifest(layout.root).update(cmd, cfg, secs, artifacts, summary)
        for p in artifacts:
            print(p)
        return EXIT_OK
    except (ArtifactError, ParseError, FileNotFoundError) as exc:
        print(f"umhi: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"umhi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv: list[str] | None = None) -> None:
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
