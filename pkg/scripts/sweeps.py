"""Throughput of a fixture under a bandwidth sweep (fixed plan) and a microbatch sweep (re-planned)."""

import argparse
from pathlib import Path

from pipeplan.io import load_scenario
from pipeplan.partitioner import partition_category_dp
from pipeplan.sim import sweep_bandwidth, sweep_microbatch

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenario", type=Path, nargs="?", default=ROOT / "scenarios" / "case-6.json")
    parser.add_argument("--mb", type=int, default=8)
    parser.add_argument("--bandwidths-mbps", type=float, nargs="+",
                        default=[1, 2, 5, 10, 20, 50, 100, 200, 500, 1000])
    parser.add_argument("--mb-range", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32])
    args = parser.parse_args()

    model, pool = load_scenario(args.scenario).load()
    plan = partition_category_dp(model, pool, args.mb).plan
    print(f"bandwidth sweep, plan fixed at mb={args.mb} over {len(plan.stages)} devices")
    for bw, thr in sweep_bandwidth(model, pool, plan, [b * 1e6 for b in args.bandwidths_mbps]):
        print(f"  {bw / 1e6:>8.1f} Mbps  {thr:.4f} samples/s")
    print("microbatch sweep, re-planned at every size")
    for mb, thr in sweep_microbatch(model, pool, partition_category_dp, args.mb_range):
        print(f"  mb={mb:<4d} {thr:.4f} samples/s")


if __name__ == "__main__":
    main()
