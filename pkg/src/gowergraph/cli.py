"""Command-line entry point.

Subcommands run the whole pipeline or one stage against a JSON config,
generate synthetic fixtures, and verify a run manifest. Exit codes:
0 success, 2 config error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import exports
from .errors import ConfigError, StageFailure
from .pipeline import PipelineConfig, run_pipeline, run_stage, verify_manifest
from .synth import BlobSpec, generate_synthetic
from .version import __version__

log = logging.getLogger("gowergraph")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("GOWERGRAPH_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, required=True, help="pipeline config JSON")
    parser.add_argument("--out", type=Path, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="run seed (overrides config)")
    parser.add_argument("--threads", type=int, help="worker cap (overrides config)")


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {"out": args.out, "seed": args.seed, "threads": args.threads}
    cfg = PipelineConfig.from_json(args.config, overrides=overrides)
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gowergraph", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gowergraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_pipe = sub.add_parser("pipeline", help="run every stage and write a manifest")
    _add_common(p_pipe)
    p_pipe.add_argument("--stage", choices=("dataset", "weights", "similarity", "network", "inference"),
                        help="run just this stage instead of the full pipeline")

    for name in ("dataset", "weights", "similarity", "network", "inference"):
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_common(p)

    p_synth = sub.add_parser("synth", help="generate a synthetic fixture")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--blobs", type=int, default=3)
    p_synth.add_argument("--size", type=int, default=20, help="rows per blob")
    p_synth.add_argument("--shift", type=float, default=4.0)
    p_synth.add_argument("--alignment", type=float, default=0.9)
    p_synth.add_argument("--noise", type=float, default=1.0)

    p_verify = sub.add_parser("verify", help="re-check checksums recorded in a manifest")
    p_verify.add_argument("--out", type=Path, required=True, help="directory holding manifest.json")
    return parser


def _cmd_synth(args: argparse.Namespace) -> int:
    levels = [60.0, 20.0, 5.0, 2.0, 1.0]
    spec = BlobSpec(
        sizes=tuple([args.size] * args.blobs),
        shift=args.shift,
        alignment=args.alignment,
        noise=args.noise,
        target_levels=tuple(levels[i % len(levels)] for i in range(args.blobs)),
    )
    table, labels, schema = generate_synthetic(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    columns = [e.name for e in schema.entries if e.role != "id"]
    exports.write_table_csv(out / "synthetic.csv", table, schema.id_column, columns)
    exports.write_json(out / "schema.json", schema.to_json())
    exports.write_csv(out / "labels.csv", ["id", "blob"], zip(table.ids, labels.tolist()))
    print(f"wrote synthetic fixture with {table.n_rows} rows to {out}")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    problems = verify_manifest(args.out)
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return EXIT_STAGE
    print("manifest ok")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "verify":
            return _cmd_verify(args)
        cfg = _load_config(args)
        if args.command == "pipeline" and not args.stage:
            manifest = run_pipeline(cfg)
            print(
                f"pipeline done: K={manifest.selected_k}, "
                f"{manifest.n_clusters} clusters, outputs in {cfg.out}"
            )
            return EXIT_OK
        stage = args.stage if args.command == "pipeline" else args.command
        try:
            written = run_stage(stage, cfg)
        except Exception as exc:
            raise StageFailure(stage, exc) from exc
        print(f"stage {stage} wrote: {', '.join(written)}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
