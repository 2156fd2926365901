"""Command line interface.

    fspovi run --config CONFIG.json [--seed S] [--out DIR]
    fspovi predict --checkpoint CKPT --input X.csv --out PRED.csv

``FSPOVI_NUM_THREADS`` caps the BLAS thread pool (default: library choice).
"""
from __future__ import annotations

import argparse
import os
import sys

from threadpoolctl import threadpool_limits

from . import runner
from .checkpoint import CheckpointFormatError
from .data import DataFormatError

THREADS_ENV = "FSPOVI_NUM_THREADS"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fspovi", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", required=True, help="path to the JSON config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    q = sub.add_parser("predict", help="predict with a saved checkpoint")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--input", required=True, help="CSV of inputs, one row per point")
    q.add_argument("--out", required=True, help="CSV file to write")
    q.add_argument("--level", type=float, default=0.95, help="predictive interval level")
    return p


def _threads():
    v = os.environ.get(THREADS_ENV)
    if not v:
        return None
    try:
        n = int(v)
    except ValueError:
        raise SystemExit(f"{THREADS_ENV} must be an integer, got {v!r}")
    return n if n > 0 else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with threadpool_limits(limits=_threads()):
        if args.command == "run":
            try:
                cfg = runner.load_config(args.config)
                res = runner.run(cfg, seed=args.seed, out=args.out)
            except runner.ConfigError as e:
                print(f"error: {e}", file=sys.stderr)
                return EXIT_CONFIG
            except OSError as e:
                print(f"error: {e}", file=sys.stderr)
                return EXIT_FAIL
            if res.status != 0:
                print(f"error: {res.error} (partial output in {res.out})", file=sys.stderr)
                return EXIT_NUMERIC
            print(f"wrote {res.out}")
            return EXIT_OK
        try:
            path = runner.predict(args.checkpoint, args.input, args.out, args.level)
        except (CheckpointFormatError, DataFormatError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_FAIL
        print(f"wrote {path}")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
