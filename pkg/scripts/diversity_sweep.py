"""Effective rank of the Jacobian versus the number of fixture realizations.

Averages over TX/RX choices and seeded scenarios, noise-free, no estimation.

    python3 scripts/diversity_sweep.py --scenarios 10 --out diversity.csv
"""

import argparse
from collections import defaultdict

import numpy as np

from muxdeembed.campaign import make_scenario
from muxdeembed.diagnostics import SweepResult, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-s", type=int, default=4)
    ap.add_argument("--n-a", type=int, default=8)
    ap.add_argument("--scenarios", type=int, default=10)
    ap.add_argument("--p-max", type=int, default=30)
    ap.add_argument("--theta0", choices=("truth", "random"), default="truth")
    ap.add_argument("--out", default=None, help="per-row CSV")
    args = ap.parse_args()

    half = args.n_a // 2
    splits = [(k, k) for k in range(1, half + 1)]
    p_values = list(range(1, args.p_max + 1))
    rows = []
    for seed in range(args.scenarios):
        scen = make_scenario(args.n_s, args.n_a, seed=seed)
        rows += sweep(scen, p_values, splits, [seed], settings=None, theta0=args.theta0).rows
    result = SweepResult(sorted(rows, key=lambda r: r.sort_key()))

    ranks = defaultdict(list)
    for r in result.rows:
        ranks[(r.m, r.p)].append(r.effective_rank)
    ms = sorted({m for m, _ in ranks})
    show = [p for p in (1, 2, 3, 5, 10, 15, 20, 30) if p <= args.p_max]
    print("mean effective rank (rows: m, columns: p)")
    print("m \\ p " + "".join(f"{p:>7d}" for p in show))
    for m in ms:
        print(f"{m:5d} " + "".join(f"{np.mean(ranks[(m, p)]):7.2f}" for p in show))
    if args.out:
        with open(args.out, "w") as f:
            f.write(result.rows_csv())
        print(f"rows -> {args.out}")


if __name__ == "__main__":
    main()
