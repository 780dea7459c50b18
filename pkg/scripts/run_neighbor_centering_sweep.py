#!/usr/bin/env python3
"""Neighbor-count x centering sweep on a synthetic cohort.

Produces the sweep_grid.csv of median-split gaps over the default
K in {10, 30, 50, 75, 100} and c in {0.5, 0.65, 0.7, 0.75, 1.0} grids, then
prints the grid with the best cell marked.
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from specweight.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/sweep")
    parser.add_argument("--cohort", help="existing cohort CSV (default: generate one)")
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--n-subjects", type=int, default=400)
    args = parser.parse_args()

    out = Path(args.out)
    cohort = args.cohort
    if cohort is None:
        rc = cli_main(["synth", "--out", str(out / "cohort"),
                       "--n-subjects", str(args.n_subjects), "--seed", str(args.seed)])
        if rc != 0:
            return rc
        cohort = str(out / "cohort" / "cohort.csv")

    rc = cli_main(["sweep", "--cohort", cohort, "--out", str(out),
                   "--epochs", str(args.epochs), "--seed", str(args.seed)])
    if rc != 0:
        return rc

    with open(out / "sweep_grid.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    best = max(rows, key=lambda r: float(r["gap_points"]))
    ks = sorted({int(r["k"]) for r in rows})
    cs = sorted({float(r["c"]) for r in rows})
    cell = {(int(r["k"]), float(r["c"])): float(r["gap_points"]) for r in rows}

    print("\nmedian-split gap (BACC points), rows = K, cols = c")
    print("      " + "".join(f"{c:>8.2f}" for c in cs))
    for k in ks:
        print(f"K={k:<4}" + "".join(f"{cell[(k, c)]:>8.2f}" for c in cs))
    print(f"\nbest cell: K={best['k']} c={best['c']} "
          f"gap={float(best['gap_points']):.2f} points")
    return 0


if __name__ == "__main__":
    sys.exit(main())
