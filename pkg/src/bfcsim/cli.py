"""Command line entry point: ``bfc-sim run`` and ``bfc-sim validate``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, load_config
from .experiments import ALL, EXPERIMENTS, run

OUTPUT_ENV = "BFC_SIM_OUTPUT_DIR"


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bfc-sim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a named experiment and write its artifacts")
    r.add_argument("--config", required=True, help="YAML experiment config")
    r.add_argument("--experiment", required=True, choices=[*EXPERIMENTS, ALL])
    r.add_argument("--seed", type=_u64, default=None, help="overrides source.seed")
    r.add_argument("--out", default=None,
                   help=f"output directory (else ${OUTPUT_ENV}, else output_dir in the config)")
    r.add_argument("--workers", type=int, default=1,
                   help="threads for simulation segments; outputs do not depend on it")

    v = sub.add_parser("validate", help="check a config file and exit")
    v.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, getattr(args, "seed", None))
    except ConfigError as exc:
        print(f"bfc-sim: invalid config {args.config}: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"{args.config}: ok (sha256 {cfg.sha256})")
        return 0

    out = args.out or os.environ.get(OUTPUT_ENV) or cfg.output_dir
    if args.workers < 1:
        print("bfc-sim: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        manifest = run(cfg, args.experiment, out, workers=args.workers)
    except OSError as exc:
        print(f"bfc-sim: cannot write output to {out}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"bfc-sim: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest['outputs'])} files to {out} "
          f"(artifact set {manifest['artifact_set_sha256'][:16]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
