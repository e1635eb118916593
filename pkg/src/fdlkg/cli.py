"""Command-line entry point: ``fdlkg <subcommand> [--config PATH] [--set K=V ...]``.

Each run writes ``summary.json`` (config echo, seed, content hash, results)
and one CSV per table into ``--out``.  Exit codes: 0 success (inconclusive
statistics included), 2 configuration error, 3 numerical blowup.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from .config import ExperimentConfig
from .errors import ConfigurationError, IntegrationBlowup
from .experiments import SUBCOMMANDS, jsonable

EXIT_CONFIG = 2
EXIT_BLOWUP = 3


def build_parser():
    p = argparse.ArgumentParser(prog="fdlkg", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    p.add_argument("--config", metavar="PATH", help="INI file with [domain], [noise], [run], [experiment]")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                   help="override, e.g. run.alpha=0.1 (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", metavar="DIR", help="output directory (default: runs/<subcommand>-<hash>)")
    return p


def load_config(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    for item in args.overrides:
        cfg.set_override(item)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg["run"]["seed"] = args.seed
    if args.threads < 1:
        raise ConfigurationError(f"--threads must be positive, got {args.threads}")
    return cfg


def write_outputs(out_dir, summary, tables):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(jsonable(summary), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    for name, (header, rows) in tables.items():
        with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(jsonable(list(rows)))


def run(subcommand, cfg, out_dir=None, threads=1):
    """Run one subcommand; returns the summary dict written to disk."""
    seed = cfg["run"]["seed"]
    chash = cfg.content_hash({"subcommand": subcommand, "seed": seed})
    out_dir = out_dir or os.path.join("runs", f"{subcommand}-{chash[:12]}")
    os.makedirs(out_dir, exist_ok=True)
    driver = SUBCOMMANDS[subcommand]
    t0 = time.perf_counter()
    if subcommand == "stationary":
        results, tables = driver(cfg, seed, threads, out_dir=out_dir)
    else:
        results, tables = driver(cfg, seed, threads)
    summary = {"subcommand": subcommand, "config": cfg.to_dict(), "seed": seed,
               "threads": threads, "content_hash": chash, "results": results}
    write_outputs(out_dir, summary, tables)
    # wall time is kept out of the summary so reruns are byte-identical
    print(f"{subcommand}: wrote {out_dir} ({time.perf_counter() - t0:.1f} s)", file=sys.stderr)
    return summary


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        run(args.subcommand, cfg, args.out, args.threads)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationBlowup as exc:
        print(f"numerical blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    return 0


if __name__ == "__main__":
    sys.exit(main())
