"""TrP/TgP table over the benchmark scenes, for fusion strategies and band groupings.

    python demos/benchmark_table.py --seeds 1 2 --frames 40
    python demos/benchmark_table.py --groups 2 3 6 12 20 --strategies adaptive

The full 10-seed, 100-frame run takes tens of minutes per variant on one core.
"""
import argparse
import json
import time

from hlt.evaluation import run_benchmark, summarize
from hlt.fusion import STRATEGIES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(1, 11)))
    ap.add_argument("--strategies", nargs="+", default=list(STRATEGIES), choices=STRATEGIES)
    ap.add_argument("--groups", type=int, nargs="+", default=[12])
    ap.add_argument("--frames", type=int, default=None, help="truncate scenes (default: 100 frames)")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--json", action="store_true", help="print per-target rows as JSON")
    args = ap.parse_args()

    variants = [(s, g) for s in args.strategies for g in args.groups]
    t0 = time.perf_counter()
    rows = run_benchmark(args.seeds, variants, n_frames=args.frames, workers=args.workers)
    elapsed = time.perf_counter() - t0
    if args.json:
        print(json.dumps([r.to_json() for r in rows], indent=1))
    print(f"{'variant':<20} {'n':>4} {'TrP %':>7} {'TgP %':>7}")
    for name, v in summarize(rows).items():
        print(f"{name:<20} {v['n']:>4} {v['TrP']:>7.2f} {v['TgP']:>7.2f}")
    print(f"{len(args.seeds)} seeds, {len(variants)} variants, {elapsed:.0f} s")


if __name__ == "__main__":
    main()
