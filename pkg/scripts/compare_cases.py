"""Plan every scenario fixture with the category DP and the even baseline, then print a table."""

import argparse
from pathlib import Path

from pipeplan.cli import compare_scenario
from pipeplan.io import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenarios", type=Path, default=ROOT / "scenarios")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--microbatches", type=int, default=100)
    args = parser.parse_args()

    print(f"{'case':<8} {'mb':>3} {'devices':>7} {'dp samples/s':>13} {'even mean':>10} {'even max':>9} {'gain':>6}")
    for path in sorted(args.scenarios.glob("case-*.json")):
        if path.name.endswith(".pool.json"):
            continue
        scenario = load_scenario(path)
        model, pool = scenario.load()
        for mb in scenario.microbatch_sizes:
            r = compare_scenario(model, pool, mb, args.seed, args.microbatches)
            cat, even = r["planners"]["category"], r["planners"]["even"]
            mean = even["mean"] or float("nan")
            best = even["max"] or float("nan")
            print(f"{scenario.name:<8} {mb:>3} {cat['devices_used']:>7} {cat['throughput']:>13.4f} "
                  f"{mean:>10.4f} {best:>9.4f} {cat['throughput'] / mean:>6.2f}")


if __name__ == "__main__":
    main()
