"""Scattering-matrix types, star composition and the DUT forward model.

Port indices are 0-based throughout. The OTA fixture is ordered
``[accessible ports A ; NDA ports C]`` and the TLN ``[OTA-side C-bar ; DUT-side S]``.
All functions are pure; arrays stored on the dataclasses are made read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    reciprocity: float = 1e-12
    passivity: float = 1e-12
    cond_cap: float = 1e12


DEFAULT_TOLERANCES = Tolerances()


class NetworkError(Exception):
    """Base class for errors raised by network computations."""


class DimensionError(NetworkError, ValueError):
    pass


class CompositionSingularError(NetworkError):
    def __init__(self, message: str, config_id: str | None = None):
        super().__init__(message)
        self.config_id = config_id


class ResonantCascadeError(NetworkError):
    pass


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_cond(m: np.ndarray, cap: float) -> bool:
    with np.errstate(all="ignore"):
        c = np.linalg.cond(m)
    return bool(np.all(np.isfinite(c)) and np.all(c < cap))


@dataclass(frozen=True)
class ScatteringMatrix:
    """Square complex scattering matrix with optional named port sets."""

    entries: np.ndarray
    partition: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        entries = _frozen(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionError(f"scattering matrix must be square, got shape {entries.shape}")
        object.__setattr__(self, "entries", entries)
        part = {k: tuple(int(i) for i in v) for k, v in dict(self.partition).items()}
        n = entries.shape[0]
        for name, idx in part.items():
            if any(i < 0 or i >= n for i in idx):
                raise DimensionError(f"port set {name!r} has indices outside 0..{n - 1}")
            if len(set(idx)) != len(idx):
                raise DimensionError(f"port set {name!r} has repeated indices")
        object.__setattr__(self, "partition", part)

    @property
    def n_ports(self) -> int:
        return self.entries.shape[0]

    def is_reciprocal(self, tol: float = DEFAULT_TOLERANCES.reciprocity) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.T), initial=0.0) <= tol)

    def is_passive(self, tol: float = DEFAULT_TOLERANCES.passivity) -> bool:
        return spectral_norm(self.entries) <= 1.0 + tol

    def block(self, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
        return self.entries[np.ix_(list(rows), list(cols))]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def spectral_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


@dataclass(frozen=True)
class PortPartition:
    """Port bookkeeping for an N_A + N_S port OTA fixture and a 2 N_S port TLN.

    ``tx`` and ``rx`` index into the accessible ports ``0..n_a-1`` and must
    cover them without overlap.
    """

    n_a: int
    n_s: int
    tx: tuple[int, ...]
    rx: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tx", tuple(int(i) for i in self.tx))
        object.__setattr__(self, "rx", tuple(int(i) for i in self.rx))
        if self.n_a < 1 or self.n_s < 1:
            raise DimensionError("n_a and n_s must be positive")
        if set(self.tx) & set(self.rx):
            raise DimensionError("tx and rx port sets overlap")
        if sorted(self.tx + self.rx) != list(range(self.n_a)):
            raise DimensionError(f"tx {self.tx} and rx {self.rx} must partition 0..{self.n_a - 1}")

    @classmethod
    def split(cls, n_a: int, n_s: int, n_t: int | None = None) -> "PortPartition":
        """First ``n_t`` accessible ports transmit, the rest receive (half/half by default)."""
        n_t = n_a // 2 if n_t is None else n_t
        return cls(n_a, n_s, tuple(range(n_t)), tuple(range(n_t, n_a)))

    @property
    def accessible(self) -> tuple[int, ...]:
        return tuple(range(self.n_a))

    @property
    def nda_side(self) -> tuple[int, ...]:
        """C: NDA ports of the OTA fixture."""
        return tuple(range(self.n_a, self.n_a + self.n_s))

    @property
    def tln_ota_side(self) -> tuple[int, ...]:
        """C-bar: OTA-side ports of the TLN."""
        return tuple(range(self.n_s))

    @property
    def dut_side(self) -> tuple[int, ...]:
        """S: DUT-side ports of the TLN."""
        return tuple(range(self.n_s, 2 * self.n_s))

    @property
    def n_t(self) -> int:
        return len(self.tx)

    @property
    def n_r(self) -> int:
        return len(self.rx)


@dataclass(frozen=True)
class PFRealization:
    """Scattering blocks of the programmable fixture (OTA fixture + one TLN state)."""

    s_aa: np.ndarray
    s_as: np.ndarray
    s_sa: np.ndarray
    s_ss: np.ndarray
    config_id: str = ""

    def __post_init__(self):
        for name in ("s_aa", "s_as", "s_sa", "s_ss"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n_a, n_s = self.s_aa.shape[0], self.s_ss.shape[0]
        shapes = {
            "s_aa": (n_a, n_a),
            "s_as": (n_a, n_s),
            "s_sa": (n_s, n_a),
            "s_ss": (n_s, n_s),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f"PF block {name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def n_a(self) -> int:
        return self.s_aa.shape[0]

    @property
    def n_s(self) -> int:
        return self.s_ss.shape[0]

    def full(self) -> np.ndarray:
        return np.block([[self.s_aa, self.s_as], [self.s_sa, self.s_ss]])

    def restrict(self, ports: Sequence[int]) -> "PFRealization":
        """Keep only the listed accessible ports (the others see matched loads)."""
        ports = list(ports)
        if any(i < 0 or i >= self.n_a for i in ports):
            raise DimensionError(f"ports {ports} out of range for {self.n_a} accessible ports")
        return PFRealization(
            self.s_aa[np.ix_(ports, ports)],
            self.s_as[ports, :],
            self.s_sa[:, ports],
            self.s_ss,
            self.config_id,
        )

    def is_reciprocal(self, tol: float = 1e-12) -> bool:
        f = self.full()
        return bool(np.max(np.abs(f - f.T)) <= tol)


def _as_array(s) -> np.ndarray:
    return np.asarray(s.entries if isinstance(s, ScatteringMatrix) else s, dtype=complex)


def compose_pf(
    s_ota,
    s_tln,
    partition: PortPartition,
    config_id: str = "",
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> PFRealization:
    """Redheffer star product of the OTA fixture with one TLN realization.

    Evaluates the four PF blocks with
    ``X1 = (S_CC T_CC - I)^-1`` and ``X2 = (T_CC S_CC - I)^-1`` where ``T`` is
    the TLN matrix; both inverses are applied through linear solves.
    """
    ota = _as_array(s_ota)
    tln = _as_array(s_tln)
    n_a, n_s = partition.n_a, partition.n_s
    if ota.shape != (n_a + n_s, n_a + n_s):
        raise DimensionError(f"S_OTA has shape {ota.shape}, expected {(n_a + n_s,) * 2}")
    if tln.shape != (2 * n_s, 2 * n_s):
        raise DimensionError(f"S_TLN has shape {tln.shape}, expected {(2 * n_s,) * 2}")

    a, c = slice(0, n_a), slice(n_a, n_a + n_s)
    cb, s = slice(0, n_s), slice(n_s, 2 * n_s)
    o_aa, o_ac, o_ca, o_cc = ota[a, a], ota[a, c], ota[c, a], ota[c, c]
    t_cc, t_cs, t_sc, t_ss = tln[cb, cb], tln[cb, s], tln[s, cb], tln[s, s]

    eye = np.eye(n_s)
    m1 = o_cc @ t_cc - eye
    m2 = t_cc @ o_cc - eye
    if not (_check_cond(m1, tol.cond_cap) and _check_cond(m2, tol.cond_cap)):
        raise CompositionSingularError(
            f"OTA/TLN cascade is singular for configuration {config_id or '?'}", config_id
        )
    x1_oca = np.linalg.solve(m1, o_ca)  # X1 S_CA
    x2_tcs = np.linalg.solve(m2, t_cs)  # X2 T_CS

    return PFRealization(
        s_aa=o_aa - o_ac @ t_cc @ x1_oca,
        s_as=-o_ac @ x2_tcs,
        s_sa=-t_sc @ x1_oca,
        s_ss=t_ss - t_sc @ o_cc @ x2_tcs,
        config_id=config_id,
    )


def terminate(s_ee, s_ei, s_ie, s_ii, load, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Reduce a network by terminating its internal ports with ``load``.

    Returns ``s_ee + s_ei L (I - s_ii L)^-1 s_ie``; no inverse of ``L`` is
    needed, so singular loads (e.g. a zero DUT) are fine.
    """
    load = _as_array(load)
    s_ii = np.asarray(s_ii, dtype=complex)
    k = s_ii.shape[0]
    if load.shape != (k, k):
        raise DimensionError(f"load has shape {load.shape}, expected {(k, k)}")
    m = np.eye(k) - s_ii @ load
    if not _check_cond(m, tol.cond_cap):
        raise ResonantCascadeError("I - S_SS S_DUT is singular (resonant cascade)")
    return np.asarray(s_ee) + np.asarray(s_ei) @ load @ np.linalg.solve(m, np.asarray(s_ie))


def measurable_s(pf: PFRealization, s_dut, tol: Tolerances = DEFAULT_TOLERANCES) -> ScatteringMatrix:
    """Accessible-port scattering matrix with the DUT attached to the PF."""
    s = terminate(pf.s_aa, pf.s_as, pf.s_sa, pf.s_ss, s_dut, tol)
    return ScatteringMatrix(s)


def forward_model(
    pf: PFRealization,
    s_dut,
    tx: Sequence[int],
    rx: Sequence[int],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Transmission matrix H (rows ``rx``, columns ``tx``) seen through the PF."""
    tx, rx = list(tx), list(rx)
    if any(i < 0 or i >= pf.n_a for i in tx + rx):
        raise DimensionError("tx/rx index out of range")
    return terminate(
        pf.s_aa[np.ix_(rx, tx)], pf.s_as[rx, :], pf.s_sa[:, tx], pf.s_ss, s_dut, tol
    )


def random_passive_reciprocal(n: int, seed: int, norm_cap: float = 0.9) -> ScatteringMatrix:
    """Random symmetric complex matrix with spectral norm ``norm_cap * U(0.5, 1)``.

    A complex Ginibre draw is symmetrized and rescaled; the result is
    deterministic in ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < norm_cap < 1.0:
        raise ValueError("norm_cap must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    sym = 0.5 * (g + g.T)
    u = rng.uniform(0.5, 1.0)
    sym *= norm_cap * u / spectral_norm(sym)
    # exact symmetry after scaling
    sym = np.triu(sym) + np.triu(sym, 1).T
    return ScatteringMatrix(sym)
