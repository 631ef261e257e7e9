#!/usr/bin/env python3
"""Run the simulation benchmark and write summary/replicate tables.

The default desk scale (100 samples per class, 25 OTUs, 10 replicates,
50 bootstrap resamples) finishes in well under an hour on one core and
much faster with --workers. --full switches to the 400-per-class,
100-replicate setup, which is an overnight job.
"""

import argparse
import sys
import time
from pathlib import Path

from dcmd.pipeline import DEFAULT_METHODS, BenchmarkConfig, run_benchmark
from dcmd.serialize import write_benchmark_replicates, write_benchmark_summary


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", default="1,2,3,4,5,6",
                    help="comma-separated scenario numbers (default all six)")
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--class-size", type=int, default=100)
    ap.add_argument("--otus", type=int, default=25)
    ap.add_argument("--bootstrap", type=int, default=50)
    ap.add_argument("--methods", default=",".join(DEFAULT_METHODS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--full", action="store_true",
                    help="full-scale run: 400/class, 100 replicates, B=300")
    ap.add_argument("--out", type=Path, default=Path("benchmark-out"))
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    scenarios = tuple(int(s) for s in args.scenarios.split(","))
    if args.full:
        args.class_size, args.replicates, args.bootstrap = 400, 100, 300

    config = BenchmarkConfig(
        scenarios=scenarios,
        replicates=args.replicates,
        class_size=args.class_size,
        n_otus=args.otus,
        bootstrap=args.bootstrap,
        methods=tuple(args.methods.split(",")),
        seed=args.seed,
        workers=args.workers,
    )
    started = time.time()
    result = run_benchmark(config)
    elapsed = time.time() - started

    args.out.mkdir(parents=True, exist_ok=True)
    write_benchmark_summary(result, args.out / "summary.tsv")
    write_benchmark_replicates(result, args.out / "replicates.tsv")

    for row in result.summary():
        sd = "NA" if row["sd"] is None else f"{row['sd']:.4f}"
        print(f"scenario {row['scenario']}  {row['method']:>18s}  "
              f"{row['mean']:.4f} ({sd})")
    print(f"done in {elapsed:.1f}s -> {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
