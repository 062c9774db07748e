"""Identifiability diagnostics: Jacobian effective rank, MSE and (m, p) sweeps."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .campaign import (
    MeasurementCampaign,
    Scenario,
    extract_submatrix_campaign,
    simulate_campaign,
)
from .estimator import EstimatorSettings, analytic_jacobian, estimate, upper
from .network import ScatteringMatrix, random_passive_reciprocal
from .tln import step2_series

logger = logging.getLogger(__name__)

ROW_HEADER = ("n_a", "n_t", "n_r", "m", "p", "tx_rx", "effective_rank", "mse", "mse_normalized", "seed")
AGG_HEADER = ("m", "p", "stat", "effective_rank", "mse")
MAX_CHOICES = 16


def effective_rank(singular_values) -> float:
    """exp of the Shannon entropy of the l1-normalized singular values."""
    sv = np.asarray(singular_values, dtype=float)
    if sv.ndim != 1 or sv.size == 0 or np.any(sv < 0) or not np.all(np.isfinite(sv)):
        raise ValueError("singular values must be a non-empty vector of finite non-negative reals")
    total = sv.sum()
    if not total > 0:
        raise ValueError("effective rank is undefined for an all-zero spectrum")
    q = sv / total
    q = q[q > 0]  # 0 ln 0 = 0, also for entries that underflow here
    return float(np.exp(-np.sum(q * np.log(q))))


@dataclass(frozen=True)
class RankReport:
    singular_values: np.ndarray
    effective_rank: float
    m: int
    p: int
    d: int
    tx_rx_label: str = ""


def tx_rx_label(tx: Sequence[int], rx: Sequence[int]) -> str:
    return "t" + ".".join(map(str, tx)) + ":r" + ".".join(map(str, rx))


def jacobian_rank_at(theta0, campaign: MeasurementCampaign, label: str | None = None) -> RankReport:
    """Singular-value spectrum and effective rank of the stacked Jacobian at ``theta0``."""
    jac = analytic_jacobian(theta0, campaign)
    sv = np.linalg.svd(jac, compute_uv=False)
    n_tilde = min(campaign.m * campaign.p, campaign.d)
    sv = sv[:n_tilde]
    return RankReport(
        singular_values=sv,
        effective_rank=effective_rank(sv),
        m=campaign.m,
        p=campaign.p,
        d=campaign.d,
        tx_rx_label=label if label is not None else tx_rx_label(campaign.tx, campaign.rx),
    )


def mse(s_hat, s_true, normalized: bool = False) -> float:
    """Mean squared entry error; ``normalized`` divides by the mean |s_true|^2."""
    a = np.asarray(s_hat.entries if isinstance(s_hat, ScatteringMatrix) else s_hat, dtype=complex)
    b = np.asarray(s_true.entries if isinstance(s_true, ScatteringMatrix) else s_true, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    err = float(np.mean(np.abs(a - b) ** 2))
    if normalized:
        return err / float(np.mean(np.abs(b) ** 2))
    return err


@dataclass(frozen=True)
class SweepRow:
    n_a: int
    n_t: int
    n_r: int
    m: int
    p: int
    tx_rx: str
    effective_rank: float
    mse: float
    mse_normalized: float
    seed: int
    choice: int = 0

    def sort_key(self):
        return (self.m, self.p, self.n_t, self.choice, self.seed)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def aggregate(self) -> list[tuple[int, int, str, float, float]]:
        """mean/min/max of effective rank and MSE per (m, p), NaN rows ignored."""
        out = []
        keyf = lambda r: (r.m, r.p)
        for (m, p), grp in itertools.groupby(sorted(self.rows, key=keyf), key=keyf):
            grp = list(grp)
            ranks = np.array([r.effective_rank for r in grp])
            errs = np.array([r.mse for r in grp])
            for stat, fn in (("mean", np.nanmean), ("min", np.nanmin), ("max", np.nanmax)):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    out.append((m, p, stat, float(fn(ranks)), float(fn(errs))))
        return out

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_HEADER)
        for r in self.rows:
            w.writerow([r.n_a, r.n_t, r.n_r, r.m, r.p, r.tx_rx, _fmt(r.effective_rank), _fmt(r.mse),
                        _fmt(r.mse_normalized), r.seed])
        return buf.getvalue()

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGG_HEADER)
        for m, p, stat, rank, err in self.aggregate():
            w.writerow([m, p, stat, _fmt(rank), _fmt(err)])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def tx_rx_choices(
    tx: Sequence[int], rx: Sequence[int], n_t: int, n_r: int, max_choices: int = MAX_CHOICES, seed: int = 0
) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All (TX subset, RX subset) pairs of the given sizes, or a seeded sample of ``max_choices``."""
    if not (1 <= n_t <= len(tx) and 1 <= n_r <= len(rx)):
        raise ValueError(f"split {n_t}x{n_r} incompatible with {len(tx)} TX / {len(rx)} RX ports")
    allc = [(t, r) for t in itertools.combinations(tx, n_t) for r in itertools.combinations(rx, n_r)]
    if len(allc) <= max_choices:
        return allc
    rng = np.random.default_rng([seed, n_t, n_r])
    pick = sorted(rng.choice(len(allc), size=max_choices, replace=False))
    return [allc[i] for i in pick]


@dataclass(frozen=True)
class _Cell:
    campaign: MeasurementCampaign
    theta0: np.ndarray
    s_true: np.ndarray
    settings: EstimatorSettings | None
    n_a: int
    n_t: int
    n_r: int
    label: str
    seed: int
    choice: int


def _run_cell(cell: _Cell) -> SweepRow:
    c = cell.campaign
    rank = err = err_n = math.nan
    try:
        rank = jacobian_rank_at(cell.theta0, c).effective_rank
        if cell.settings is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = estimate(c, cell.settings)
            err = mse(rep.s_dut_hat, cell.s_true)
            err_n = mse(rep.s_dut_hat, cell.s_true, normalized=True)
    except Exception as exc:  # recorded per row, the sweep carries on
        logger.warning("sweep cell %s p=%d seed=%d failed: %s", cell.label, c.p, cell.seed, exc)
    return SweepRow(cell.n_a, cell.n_t, cell.n_r, c.m, c.p, cell.label, rank, err, err_n, cell.seed, cell.choice)


def sweep(
    scenario: Scenario,
    p_values: Iterable[int],
    antenna_splits: Iterable[tuple[int, int]],
    seeds: Iterable[int],
    settings: EstimatorSettings | None = EstimatorSettings(),
    max_choices: int = MAX_CHOICES,
    theta0: str = "truth",
    jobs: int = 1,
) -> SweepResult:
    """Effective rank and estimation MSE over TX/RX choices, p values and seeds.

    For each seed one Step-2 series of length ``max(p_values)`` is simulated
    with all scenario TX/RX ports; smaller p use its prefixes. Each split
    ``(n_t, n_r)`` is evaluated on every TX/RX subset choice (capped at
    ``max_choices``). Pass ``settings=None`` to skip estimation (MSE = NaN).
    ``theta0`` is ``"truth"`` or ``"random"`` (a fresh reciprocal passive draw per seed).
    """
    p_values = sorted(set(int(p) for p in p_values))
    splits = [(int(a), int(b)) for a, b in antenna_splits]
    part = scenario.partition
    cells: list[_Cell] = []
    s_true = scenario.s_dut_true.entries
    for seed in seeds:
        configs = step2_series(part.n_s, max(p_values), seed)
        full = simulate_campaign(scenario, configs, seed=scenario.seed * 1_000_003 + seed)
        if theta0 == "truth":
            th0 = upper(s_true)
        elif theta0 == "random":
            th0 = upper(random_passive_reciprocal(part.n_s, seed, 0.9))
        else:
            raise ValueError("theta0 must be 'truth' or 'random'")
        for n_t, n_r in splits:
            for ci, (tx, rx) in enumerate(tx_rx_choices(part.tx, part.rx, n_t, n_r, max_choices, scenario.seed)):
                sub = extract_submatrix_campaign(full, tx, rx)
                label = tx_rx_label(tx, rx)
                for p in p_values:
                    cells.append(_Cell(sub.prefix(p), th0, s_true, settings, n_t + n_r, n_t, n_r, label, seed, ci))

    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        rows = [_run_cell(c) for c in cells]
    rows.sort(key=SweepRow.sort_key)
    return SweepResult(rows)
