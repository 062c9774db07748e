"""Estimation error versus measurement count m and realization count p.

Runs the full estimator on a grid of (TX x RX split, p) with a noisy
scenario and prints the median normalized MSE per cell.

    python3 scripts/mse_sweep.py --seeds 0,1,2 --p-list 1,2,5,10,30 --out mse.csv
"""

import argparse
import statistics
from collections import defaultdict

from muxdeembed.campaign import make_scenario
from muxdeembed.diagnostics import sweep
from muxdeembed.estimator import EstimatorSettings


def ints(text):
    return [int(x) for x in text.split(",") if x]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario-seed", type=int, default=0)
    ap.add_argument("--seeds", type=ints, default=[0, 1, 2])
    ap.add_argument("--p-list", type=ints, default=[1, 2, 5, 10, 30])
    ap.add_argument("--splits", type=ints, default=[1, 2, 4], help="k for k x k TX/RX splits")
    ap.add_argument("--max-choices", type=int, default=2)
    ap.add_argument("--snr-db", type=float, default=62.3)
    ap.add_argument("--ota-error-db", type=float, default=46.5)
    ap.add_argument("--restarts", type=int, default=8)
    ap.add_argument("--max-iters", type=int, default=20000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    scen = make_scenario(4, 8, args.scenario_seed, snr_db=args.snr_db, ota_knowledge_error_db=args.ota_error_db)
    settings = EstimatorSettings(n_restarts=args.restarts, max_iters=args.max_iters)
    res = sweep(scen, args.p_list, [(k, k) for k in args.splits], args.seeds, settings,
                max_choices=args.max_choices, jobs=args.jobs)

    cells = defaultdict(list)
    for r in res.rows:
        cells[(r.m, r.p)].append(r.mse_normalized)
    ms = sorted({m for m, _ in cells})
    print(f"median normalized MSE, SNR {args.snr_db} dB, OTA error {args.ota_error_db} dB")
    print("m \\ p " + "".join(f"{p:>10d}" for p in args.p_list))
    for m in ms:
        print(f"{m:5d} " + "".join(f"{statistics.median(cells[(m, p)]):10.2e}" for p in args.p_list))
    if args.out:
        with open(args.out, "w") as f:
            f.write(res.rows_csv())
        print(f"rows -> {args.out}")


if __name__ == "__main__":
    main()
