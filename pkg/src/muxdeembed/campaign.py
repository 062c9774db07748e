"""Synthetic scenarios and measurement campaigns through the programmable fixture."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .network import (
    NetworkError,
    PFRealization,
    PortPartition,
    ScatteringMatrix,
    compose_pf,
    forward_model,
    random_passive_reciprocal,
)
from .tln import TLNConfiguration, TLNHardwareModel, synthesize_tln

# seed-sequence salts, so each random stream of a scenario is independent
_SALT_OTA, _SALT_DUT, _SALT_NOISE, _SALT_OTA_ERR = 11, 13, 17, 19


class CampaignError(RuntimeError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Scenario:
    """Ground-truth world: OTA fixture, TLN hardware, DUT and imperfection levels.

    ``snr_db`` and ``ota_knowledge_error_db`` may be ``math.inf`` to switch the
    corresponding imperfection off.
    """

    s_ota: ScatteringMatrix
    hw: TLNHardwareModel
    s_dut_true: ScatteringMatrix
    partition: PortPartition
    snr_db: float = math.inf
    ota_knowledge_error_db: float = math.inf
    seed: int = 0

    def __post_init__(self):
        n_a, n_s = self.partition.n_a, self.partition.n_s
        if self.s_ota.n_ports != n_a + n_s:
            raise ValueError(f"S_OTA must have {n_a + n_s} ports")
        if self.s_dut_true.n_ports != n_s:
            raise ValueError(f"S_DUT must have {n_s} ports")
        if not (self.s_dut_true.is_reciprocal(1e-12) and self.s_dut_true.is_passive(1e-12)):
            raise ValueError("the true DUT must be reciprocal and passive")
        if not self.snr_db > 0:
            raise ValueError("snr_db must be positive")

    @property
    def n_s(self) -> int:
        return self.partition.n_s

    @property
    def n_a(self) -> int:
        return self.partition.n_a


def make_scenario(
    n_s: int = 4,
    n_a: int = 8,
    seed: int = 0,
    *,
    n_t: int | None = None,
    snr_db: float = math.inf,
    ota_knowledge_error_db: float = math.inf,
    ota_norm_cap: float = 0.95,
    dut_norm_cap: float = 0.9,
    hw: TLNHardwareModel | None = None,
) -> Scenario:
    """Random reciprocal passive OTA fixture and DUT with the default TLN hardware."""
    ss = np.random.SeedSequence(seed)
    ota_seed, dut_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    s_ota = random_passive_reciprocal(n_a + n_s, ota_seed, ota_norm_cap)
    s_dut = random_passive_reciprocal(n_s, dut_seed, dut_norm_cap)
    return Scenario(
        s_ota=s_ota,
        hw=hw or TLNHardwareModel(),
        s_dut_true=s_dut,
        partition=PortPartition.split(n_a, n_s, n_t),
        snr_db=snr_db,
        ota_knowledge_error_db=ota_knowledge_error_db,
        seed=seed,
    )


class Stack(NamedTuple):
    """Campaign blocks stacked over realizations, shapes ``(p, ...)``."""

    rt: np.ndarray  # (p, n_r, n_t)  S^PF_RT
    rs: np.ndarray  # (p, n_r, n_s)  S^PF_RS
    st: np.ndarray  # (p, n_s, n_t)  S^PF_ST
    ss: np.ndarray  # (p, n_s, n_s)  S^PF_SS
    h: np.ndarray  # (p, n_r, n_t)  measured H


@dataclass(frozen=True)
class MeasurementCampaign:
    configs: tuple[TLNConfiguration, ...]
    tx: tuple[int, ...]
    rx: tuple[int, ...]
    h_meas: tuple[np.ndarray, ...]
    pf_known: tuple[PFRealization, ...]
    n_s: int
    noise_sigma: float | None = None
    snr_db: float = math.inf
    ota_knowledge_error_db: float = math.inf
    _stack: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "configs", tuple(self.configs))
        object.__setattr__(self, "tx", tuple(int(i) for i in self.tx))
        object.__setattr__(self, "rx", tuple(int(i) for i in self.rx))
        hs = []
        for h in self.h_meas:
            h = np.array(h, dtype=complex)
            h.setflags(write=False)
            hs.append(h)
        object.__setattr__(self, "h_meas", tuple(hs))
        object.__setattr__(self, "pf_known", tuple(self.pf_known))
        if not len(self.configs) == len(self.h_meas) == len(self.pf_known):
            raise ValueError("configs, h_meas and pf_known must be index-aligned")
        for r, (h, pf) in enumerate(zip(self.h_meas, self.pf_known)):
            if h.shape != (self.n_r, self.n_t):
                raise ValueError(f"H[{r}] has shape {h.shape}, expected {(self.n_r, self.n_t)}")
            if pf.n_s != self.n_s or any(i >= pf.n_a for i in self.tx + self.rx):
                raise ValueError(f"pf_known[{r}] is inconsistent with tx/rx or n_s")

    @property
    def n_t(self) -> int:
        return len(self.tx)

    @property
    def n_r(self) -> int:
        return len(self.rx)

    @property
    def m(self) -> int:
        return self.n_t * self.n_r

    @property
    def p(self) -> int:
        return len(self.configs)

    @property
    def d(self) -> int:
        return self.n_s * (self.n_s + 1) // 2

    @property
    def y(self) -> np.ndarray:
        """Flattened measurements, column-major within each H, realizations stacked."""
        if not self.h_meas:
            return np.zeros(0, dtype=complex)
        return np.concatenate([h.ravel(order="F") for h in self.h_meas])

    def stacked(self) -> Stack:
        if not self._stack:
            tx, rx = list(self.tx), list(self.rx)
            p, n_s = self.p, self.n_s
            if p == 0:
                z = lambda *s: np.zeros((0, *s), dtype=complex)
                st = Stack(z(self.n_r, self.n_t), z(self.n_r, n_s), z(n_s, self.n_t), z(n_s, n_s),
                           z(self.n_r, self.n_t))
            else:
                st = Stack(
                    np.stack([pf.s_aa[np.ix_(rx, tx)] for pf in self.pf_known]),
                    np.stack([pf.s_as[rx, :] for pf in self.pf_known]),
                    np.stack([pf.s_sa[:, tx] for pf in self.pf_known]),
                    np.stack([pf.s_ss for pf in self.pf_known]),
                    np.stack(self.h_meas),
                )
            for a in st:
                a.setflags(write=False)
            self._stack.append(st)
        return self._stack[0]

    def prefix(self, p: int) -> "MeasurementCampaign":
        """First ``p`` realizations."""
        return replace(
            self,
            configs=self.configs[:p],
            h_meas=self.h_meas[:p],
            pf_known=self.pf_known[:p],
            _stack=[],
        )


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), salt])


def _complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    scale = math.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def perturbed_ota(scenario: Scenario, seed: int | None = None) -> np.ndarray:
    """The estimator's copy of S_OTA: truth plus independent white error on every entry.

    The copy is in general not reciprocal, like a fixture characterized by
    drifting measurements.
    """
    s = scenario.s_ota.entries
    if math.isinf(scenario.ota_knowledge_error_db):
        return np.array(s)
    seed = scenario.seed if seed is None else seed
    var = np.mean(np.abs(s) ** 2) / 10 ** (scenario.ota_knowledge_error_db / 10)
    return s + _complex_noise(_rng(seed, _SALT_OTA_ERR), s.shape, var)


def simulate_campaign(
    scenario: Scenario,
    configs: Sequence[TLNConfiguration],
    tx: Sequence[int] | None = None,
    rx: Sequence[int] | None = None,
    seed: int | None = None,
) -> MeasurementCampaign:
    """Measure H through every configuration, adding the scenario's imperfections.

    Measurement noise is circular complex white noise whose variance is the
    mean |H|^2 over the whole campaign divided by ``10**(snr_db/10)``.
    """
    tx = scenario.partition.tx if tx is None else tuple(tx)
    rx = scenario.partition.rx if rx is None else tuple(rx)
    seed = scenario.seed if seed is None else seed
    part = scenario.partition
    ota_known = perturbed_ota(scenario, seed)

    h_clean, pf_known = [], []
    for r, cfg in enumerate(configs):
        if cfg.n_s != part.n_s:
            raise CampaignError(f"configuration {r} ({cfg.token}) has wrong port count", r)
        try:
            tln = synthesize_tln(cfg, scenario.hw)
            pf_true = compose_pf(scenario.s_ota, tln, part, cfg.token)
            h_clean.append(forward_model(pf_true, scenario.s_dut_true, tx, rx))
            pf_known.append(compose_pf(ota_known, tln, part, cfg.token))
        except NetworkError as exc:
            raise CampaignError(f"configuration {r} ({cfg.token}): {exc}", r) from exc

    noise_sigma = None
    h_meas = h_clean
    if not math.isinf(scenario.snr_db) and h_clean:
        power = float(np.mean(np.abs(np.stack(h_clean)) ** 2))
        var = power / 10 ** (scenario.snr_db / 10)
        noise = _complex_noise(_rng(seed, _SALT_NOISE), (len(h_clean), len(rx), len(tx)), var)
        h_meas = [h + n for h, n in zip(h_clean, noise)]
        noise_sigma = math.sqrt(var)

    return MeasurementCampaign(
        configs=tuple(configs),
        tx=tx,
        rx=rx,
        h_meas=tuple(h_meas),
        pf_known=tuple(pf_known),
        n_s=part.n_s,
        noise_sigma=noise_sigma,
        snr_db=scenario.snr_db,
        ota_knowledge_error_db=scenario.ota_knowledge_error_db,
    )


def extract_submatrix_campaign(
    full: MeasurementCampaign, tx_sub: Sequence[int], rx_sub: Sequence[int]
) -> MeasurementCampaign:
    """Restrict a campaign to a subset of its transmitting and receiving ports.

    Unused accessible ports are taken as matched-terminated, so the PF blocks
    are simply row/column restricted. Port indices of the result are
    renumbered to ``0..len(tx_sub)+len(rx_sub)-1`` in the order
    ``sorted(tx_sub + rx_sub)``.
    """
    tx_sub, rx_sub = list(tx_sub), list(rx_sub)
    if not set(tx_sub) <= set(full.tx) or not set(rx_sub) <= set(full.rx):
        raise IndexError(f"tx {tx_sub} / rx {rx_sub} not contained in campaign tx {full.tx} / rx {full.rx}")
    if not tx_sub or not rx_sub:
        raise IndexError("tx and rx subsets must be non-empty")
    col = [full.tx.index(i) for i in tx_sub]
    row = [full.rx.index(i) for i in rx_sub]
    keep = sorted(tx_sub + rx_sub)
    renum = {old: new for new, old in enumerate(keep)}
    return MeasurementCampaign(
        configs=full.configs,
        tx=tuple(renum[i] for i in tx_sub),
        rx=tuple(renum[i] for i in rx_sub),
        h_meas=tuple(h[np.ix_(row, col)] for h in full.h_meas),
        pf_known=tuple(pf.restrict(keep) for pf in full.pf_known),
        n_s=full.n_s,
        noise_sigma=full.noise_sigma,
        snr_db=full.snr_db,
        ota_knowledge_error_db=full.ota_knowledge_error_db,
    )
