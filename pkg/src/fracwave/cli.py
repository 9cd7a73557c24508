"""Command-line entry point: ``fracwave <subcommand> [--config FILE] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from fracwave import __version__
from fracwave.errors import FracwaveError
from fracwave.harness import ExperimentConfig, default_config, emit_report, run_experiment

SUBCOMMANDS = {
    "verify-identities": "identities",
    "kernel-table": "kernel",
    "solve": "solve",
    "estimate-ratio": "estimate-ratio",
    "sharp-check": "sharp-check",
    "ap-weights": "ap-weights",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracwave", description="Fractional diffusion-wave experiments.")
    parser.add_argument("--version", action="version", version=f"fracwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {kind} experiment")
        p.add_argument("--config", type=Path, help="JSON file overriding the default configuration")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="ensemble seed")
        p.add_argument("--threads", type=int, help="worker threads for ensemble members")
        p.add_argument("--refine", type=int, default=0, help="double n_points and n_steps this many times")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(kind: str, path: Path | None, seed=None, threads=None, refine: int = 0) -> ExperimentConfig:
    """Defaults for ``kind``, overridden by the JSON file, then by the flags."""
    data = default_config(kind).to_dict()
    if path is not None:
        user = json.loads(Path(path).read_text())
        if user.get("kind", kind) != kind:
            raise FracwaveError(f"config kind {user['kind']!r} does not match subcommand kind {kind!r}")
        for key in ("grid", "ensemble"):
            if key in user:
                user[key] = {**data[key], **user[key]}
        data.update(user)
    config = ExperimentConfig.from_dict(data)
    if seed is not None:
        config = dataclasses.replace(config, ensemble=dataclasses.replace(config.ensemble, seed=seed))
    if threads is not None:
        config = dataclasses.replace(config, threads=threads)
    if refine:
        config = dataclasses.replace(config, grid=config.grid.refined(refine))
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_config(SUBCOMMANDS[args.command], args.config, args.seed, args.threads, args.refine)
        report = run_experiment(config, cache_dir=args.out / "cache")
        files = emit_report(report, args.out)
    except (FracwaveError, ValueError, OSError) as exc:
        print(f"fracwave: error: {exc}", file=sys.stderr)
        return 2
    print(files["summary"].read_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
