"""Run every named experiment with its default parameters and write the tables.

    python scripts/run_all_experiments.py results/            # all of them
    python scripts/run_all_experiments.py results/ monotonicity energy-relation

Tail tables for tilted exteriors are slow the first time; set
FRACMIN_CACHE_DIR to keep them between runs.
"""
import argparse
import json
import time
from pathlib import Path

from fracmin.experiments import RUNNERS, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("names", nargs="*", default=sorted(RUNNERS))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    unknown = set(args.names) - set(RUNNERS)
    if unknown:
        ap.error(f"unknown experiments: {', '.join(sorted(unknown))}")
    timings = {}
    for name in args.names:
        t0 = time.perf_counter()
        res = run_experiment(name, seed=args.seed)
        timings[name] = round(time.perf_counter() - t0, 2)
        res.write(args.out)
        print(f"{name:22s} {timings[name]:8.1f} s  {json.dumps(res.summary, default=str)}", flush=True)
    (args.out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")


if __name__ == "__main__":
    main()
