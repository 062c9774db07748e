"""Acceptance gate. Each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python3 tests/test_acceptance.py``.
"""

import itertools
import statistics
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, brute_force_counts, rand_sym

from muxdeembed.campaign import (
    MeasurementCampaign,
    extract_submatrix_campaign,
    make_scenario,
    simulate_campaign,
)
from muxdeembed.cli import main as cli_main
from muxdeembed.diagnostics import jacobian_rank_at, mse, sweep, tx_rx_choices
from muxdeembed.estimator import (
    EstimatorSettings,
    analytic_jacobian,
    estimate,
    fd_jacobian,
    loss,
    upper,
)
from muxdeembed.fileio import (
    TouchstoneDocument,
    load_campaign,
    parse_touchstone,
    save_campaign,
    write_touchstone,
)
from muxdeembed.network import (
    PFRealization,
    PortPartition,
    compose_pf,
    measurable_s,
    terminate,
)
from muxdeembed.tln import count_step1_configs, count_step2_configs, step2_series

SISO_TX, SISO_RX = [0], [4]


def report(n, ok, detail, elapsed=None):
    tag = "PASS" if ok else "FAIL"
    t = f" [{elapsed:.1f} s]" if elapsed is not None else ""
    line = f"{tag} criterion {n}: {detail}{t}"
    print(line, flush=True)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _estimate_mse(scen, p, tx=None, rx=None, seed=0):
    camp = simulate_campaign(scen, step2_series(4, p, seed), tx, rx)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = estimate(camp, EstimatorSettings(n_restarts=8))
    return mse(rep.s_dut_hat, scen.s_dut_true, normalized=True)


def test_c01_jacobian_vs_finite_differences():
    t0 = time.perf_counter()
    splits = {1: (1, 1), 4: (2, 2), 9: (3, 3), 16: (4, 4)}
    cases = list(itertools.product((2, 3, 4), (1, 4, 9, 16), (1, 5, 30)))
    rng = np.random.default_rng(2024)
    # pad the full grid with random extra draws
    cases += [(int(rng.choice([2, 3, 4])), int(rng.choice([1, 4, 9, 16])), int(rng.choice([1, 5, 30]))) for _ in range(14)]
    worst = 0.0
    for k, (n_s, m, p) in enumerate(cases):
        n_t, n_r = splits[m]
        p = min(p, count_step2_configs(n_s))
        scen = make_scenario(n_s, 8, seed=k)
        camp = simulate_campaign(scen, step2_series(n_s, p, k), list(range(n_t)), list(range(4, 4 + n_r)))
        theta = upper(rand_sym(n_s, 1000 + k, 0.8))
        ja = analytic_jacobian(theta, camp)
        jf = fd_jacobian(theta, camp)
        worst = max(worst, float(np.max(np.abs(ja - jf)) / np.max(np.abs(ja))))
    el = time.perf_counter() - t0
    report(1, len(cases) >= 50 and worst < 1e-6 and el < 60,
           f"{len(cases)} instances, worst relative error {worst:.2e} (< 1e-6)", el)


def test_c02_cascade_associativity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(100):
        n_a, n_s = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        ota, tln, dut = rand_sym(n_a + n_s, 3 * k, 0.95), rand_sym(2 * n_s, 3 * k + 1, 0.95), rand_sym(n_s, 3 * k + 2)
        pf = compose_pf(ota, tln, PortPartition.split(n_a, n_s, max(1, n_a // 2) if n_a > 1 else 0))
        lhs = measurable_s(pf, dut).entries
        load = terminate(tln[:n_s, :n_s], tln[:n_s, n_s:], tln[n_s:, :n_s], tln[n_s:, n_s:], dut)
        a, c = slice(0, n_a), slice(n_a, n_a + n_s)
        rhs = terminate(ota[a, a], ota[a, c], ota[c, a], ota[c, c], load)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    el = time.perf_counter() - t0
    report(2, worst < 1e-10 and el < 10, f"100 instances, max error {worst:.2e} (< 1e-10)", el)


def test_c03_counting_formulas():
    t0 = time.perf_counter()
    ok = True
    for n in range(1, 7):
        s1, s2 = brute_force_counts(n)
        ok &= count_step1_configs(n) == s1 and count_step2_configs(n) == s2
    ok &= [count_step1_configs(n) for n in range(1, 5)] == [3, 10, 33, 109]
    ok &= [count_step2_configs(n) for n in range(1, 5)] == [1, 7, 39, 196]
    el = time.perf_counter() - t0
    report(3, ok and el < 30, "closed forms equal brute force for N_S = 1..6", el)


def test_c04_rank_bounds_and_siso_floor():
    t0 = time.perf_counter()
    ok, n_reports, floor = True, 0, []
    for seed in range(3):
        scen = make_scenario(4, 8, seed=seed)
        full = simulate_campaign(scen, step2_series(4, 30, seed))
        theta = upper(scen.s_dut_true)
        for n_t, n_r in ((1, 1), (2, 2), (3, 3), (4, 4), (1, 4)):
            for tx, rx in tx_rx_choices(full.tx, full.rx, n_t, n_r, 4, seed):
                sub = extract_submatrix_campaign(full, tx, rx)
                for p in (1, 2, 5, 30):
                    rep = jacobian_rank_at(theta, sub.prefix(p))
                    n_reports += 1
                    ok &= 1 - 1e-9 <= rep.effective_rank <= min(rep.m * rep.p, 10) + 1e-9
                    if rep.m == 1 and p == 1:
                        floor.append(rep.effective_rank)
    ok &= all(abs(r - 1) <= 1e-9 for r in floor) and bool(floor)
    el = time.perf_counter() - t0
    report(4, ok and el < 10, f"{n_reports} reports within [1, min(mp, 10)], m=1 p=1 gives R=1 ({len(floor)} cases)", el)


def test_c05_diversity_trend():
    t0 = time.perf_counter()
    means = {}
    for seed in range(10):
        res = sweep(make_scenario(4, 8, seed=seed), [1, 30], [(1, 1), (2, 2), (3, 3)], [seed], settings=None)
        for r in res.rows:
            means.setdefault((r.m, r.p), []).append(r.effective_rank)
    mean = {k: float(np.mean(v)) for k, v in means.items()}
    ok = all(mean[(m, 30)] > mean[(m, 1)] for m in (1, 4, 9)) and mean[(1, 30)] >= 5
    el = time.perf_counter() - t0
    detail = ", ".join(f"m={m}: {mean[(m, 1)]:.2f} -> {mean[(m, 30)]:.2f}" for m in (1, 4, 9))
    report(5, ok and el < 300, f"mean R p=1 -> p=30 over 10 scenarios: {detail} (m=1 needs >= 5)", el)


def test_c06_identifiability_phase_change():
    t0 = time.perf_counter()
    scen = make_scenario(4, 8, seed=0)
    a = _estimate_mse(scen, 1)
    b = _estimate_mse(scen, 1, SISO_TX, SISO_RX)
    c = _estimate_mse(scen, 30, SISO_TX, SISO_RX)
    el = time.perf_counter() - t0
    ok = a < 1e-8 and b > 1e-1 and c < 1e-2 and el < 600
    report(6, ok, f"nMSE m=16,p=1: {a:.2e} (< 1e-8); m=1,p=1: {b:.2e} (> 1e-1); m=1,p=30: {c:.2e} (< 1e-2)", el)


def test_c07_noise_robustness():
    t0 = time.perf_counter()
    res = {"16x1": [], "1x1": [], "1x30": []}
    for seed in range(5):
        scen = make_scenario(4, 8, seed=seed, snr_db=62.3, ota_knowledge_error_db=46.5)
        res["16x1"].append(_estimate_mse(scen, 1, seed=seed))
        res["1x1"].append(_estimate_mse(scen, 1, SISO_TX, SISO_RX, seed=seed))
        res["1x30"].append(_estimate_mse(scen, 30, SISO_TX, SISO_RX, seed=seed))
    med = {k: statistics.median(v) for k, v in res.items()}
    r1 = med["1x1"] / med["16x1"]
    r2 = med["1x1"] / med["1x30"]
    el = time.perf_counter() - t0
    report(7, r1 >= 100 and r2 >= 10 and el < 600,
           f"median nMSE m=16,p=1 {med['16x1']:.2e}, m=1,p=1 {med['1x1']:.2e}, m=1,p=30 {med['1x30']:.2e}; "
           f"ratios {r1:.0f}x (>= 100), {r2:.0f}x (>= 10)", el)


def test_c08_loss_contract():
    worst_truth = 0.0
    ones = []
    for seed in range(5):
        scen = make_scenario(4, 8, seed=seed)
        for tx, rx, p in ((None, None, 1), (SISO_TX, SISO_RX, 30), ([0, 1], [5], 7)):
            camp = simulate_campaign(scen, step2_series(4, p, seed), tx, rx)
            worst_truth = max(worst_truth, loss(upper(scen.s_dut_true), camp))
            ones.append(loss(np.zeros(10), camp))
    # a fixture that never couples to the DUT predicts S_PF_RT for every theta
    camp = simulate_campaign(make_scenario(4, 8, 1), step2_series(4, 3, 1))
    blind = MeasurementCampaign(camp.configs, camp.tx, camp.rx, camp.h_meas,
                                [PFRealization(pf.s_aa, pf.s_as * 0, pf.s_sa, pf.s_ss) for pf in camp.pf_known],
                                camp.n_s)
    ones.append(loss(upper(rand_sym(4, 3)), blind))
    ok = worst_truth < 1e-12 and all(v == 1.0 for v in ones)
    report(8, ok, f"max loss at truth {worst_truth:.1e} (< 1e-12); loss = 1 exactly in {len(ones)} cases")


def test_c09_io_round_trips(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    worst = 0.0
    for k in range(100):
        n = 1 + k % 8
        freqs = np.cumsum(rng.uniform(1e3, 1e9, 1 + k % 3))
        pts = [(float(f), rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) for f in freqs]
        doc = TouchstoneDocument(n, pts, "RI", 50.0)
        once = parse_touchstone(write_touchstone(doc))
        twice = parse_touchstone(write_touchstone(once))
        for (f, s), (g, t), (h, u) in zip(doc.frequency_points, once.frequency_points, twice.frequency_points):
            worst = max(worst, float(np.max(np.abs(s - t))), float(np.max(np.abs(t - u))), abs(f - g), abs(g - h))
    scen = make_scenario(4, 8, seed=1, snr_db=62.3, ota_knowledge_error_db=46.5)
    identical = True
    for p in (0, 1, 30):
        camp = simulate_campaign(scen, step2_series(4, max(p, 1), 1)).prefix(p)
        path = tmp_path / f"c{p}.json"
        save_campaign(path, camp, scen)
        back, _ = load_campaign(path)
        identical &= back.configs == camp.configs and back.noise_sigma == camp.noise_sigma
        identical &= all(a.tobytes() == b.tobytes() for a, b in zip(camp.h_meas, back.h_meas))
        for a, b in zip(camp.pf_known, back.pf_known):
            identical &= all(getattr(a, f).tobytes() == getattr(b, f).tobytes() for f in ("s_aa", "s_as", "s_sa", "s_ss"))
    el = time.perf_counter() - t0
    report(9, worst <= 1e-12 and identical and el < 10,
           f"100 Touchstone documents, max deviation {worst:.1e}; campaign round-trip bit-identical: {identical}", el)


def test_c10_sweep_determinism(tmp_path):
    t0 = time.perf_counter()
    scen = tmp_path / "scen.json"
    assert cli_main(["generate", "--n-s", "4", "--n-a", "8", "--seed", "3", "--snr-db", "62.3",
                     "--ota-error-db", "46.5", "--out", str(scen)]) == 0
    blobs = []
    for jobs in (1, 8):
        out = tmp_path / f"rows_{jobs}.csv"
        code = cli_main(["sweep", str(scen), "--p-list", "1,2,5", "--splits", "1x1,2x2", "--seeds", "0,1",
                         "--max-choices", "4", "--max-iters", "300", "--restarts", "2",
                         "--jobs", str(jobs), "--out", str(out)])
        assert code == 0
        blobs.append(out.read_bytes() + out.with_suffix(".agg.csv").read_bytes())
    el = time.perf_counter() - t0
    report(10, blobs[0] == blobs[1], f"sweep CSV with --jobs 1 and --jobs 8 byte-identical ({len(blobs[0])} bytes)", el)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
