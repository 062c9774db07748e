"""One transmitter, one receiver: the DUT is invisible from a single
realization but recoverable from many.

    python3 scripts/siso_demo.py --seed 0
"""

import argparse
import time
import warnings

import numpy as np

from muxdeembed.campaign import make_scenario, simulate_campaign
from muxdeembed.diagnostics import jacobian_rank_at, mse
from muxdeembed.estimator import EstimatorSettings, estimate, upper
from muxdeembed.tln import step2_series


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p-list", default="1,5,10,30")
    ap.add_argument("--snr-db", type=float, default=float("inf"))
    ap.add_argument("--ota-error-db", type=float, default=float("inf"))
    args = ap.parse_args()

    scen = make_scenario(4, 8, args.seed, snr_db=args.snr_db, ota_knowledge_error_db=args.ota_error_db)
    theta = upper(scen.s_dut_true)
    np.set_printoptions(precision=3, suppress=True)
    print("true S_DUT:\n", scen.s_dut_true.entries)
    for p in (int(x) for x in args.p_list.split(",")):
        camp = simulate_campaign(scen, step2_series(4, p, args.seed), tx=[0], rx=[4])
        rank = jacobian_rank_at(theta, camp).effective_rank
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = estimate(camp, EstimatorSettings())
        el = time.perf_counter() - t0
        err = mse(rep.s_dut_hat, scen.s_dut_true, normalized=True)
        print(f"p={p:3d}  R={rank:5.2f}  loss={rep.final_loss:.2e}  nMSE={err:.2e}  ({el:.1f} s)")
    print("last estimate:\n", rep.s_dut_hat.entries)


if __name__ == "__main__":
    main()
