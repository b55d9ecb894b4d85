"""Regenerate the heterogeneous-cluster scenario fixtures under scenarios/."""

import argparse
from pathlib import Path

from pipeplan.scenarios import write_fixtures

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=ROOT / "scenarios")
    parser.add_argument("--mb", type=int, nargs="+", default=[8])
    args = parser.parse_args()
    for path in write_fixtures(args.out, args.mb):
        print(path)


if __name__ == "__main__":
    main()
