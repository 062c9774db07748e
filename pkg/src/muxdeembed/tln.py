"""Tunable load network (TLN): configurations, counting, enumeration and synthesis.

A configuration assigns one termination per NDA port. Coupled loads join
two adjacent ports on a line (no wrap-around). Configurations serialize to
one character per port: ``A``, ``B``, ``C`` (individual loads), ``(`` and
``)`` (left and right member of a coupled pair) and ``T`` (thru to the DUT).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

import numpy as np

from .network import ScatteringMatrix

ENUMERATION_CAP = 10**6


class ConfigurationError(ValueError):
    pass


class Termination(enum.IntEnum):
    # integer values define the canonical (lexicographic) ordering
    LoadA = 0
    LoadB = 1
    LoadC = 2
    CoupledLeft = 3
    CoupledRight = 4
    Thru = 5

    @property
    def token(self) -> str:
        return _TOKENS[self]

    @classmethod
    def from_token(cls, ch: str) -> "Termination":
        try:
            return _FROM_TOKEN[ch]
        except KeyError:
            raise ConfigurationError(f"unknown termination token {ch!r}") from None


_TOKENS = {
    Termination.LoadA: "A",
    Termination.LoadB: "B",
    Termination.LoadC: "C",
    Termination.CoupledLeft: "(",
    Termination.CoupledRight: ")",
    Termination.Thru: "T",
}
_FROM_TOKEN = {v: k for k, v in _TOKENS.items()}
LOADS = (Termination.LoadA, Termination.LoadB, Termination.LoadC)


class Stage(enum.Enum):
    Step1 = "step1"
    Step2 = "step2"


def _check_pairs(terms: Sequence[Termination]) -> None:
    i = 0
    while i < len(terms):
        t = terms[i]
        if t is Termination.CoupledLeft:
            if i + 1 >= len(terms) or terms[i + 1] is not Termination.CoupledRight:
                raise ConfigurationError(f"coupled load at port {i} has no right partner")
            i += 2
            continue
        if t is Termination.CoupledRight:
            raise ConfigurationError(f"coupled load at port {i} has no left partner")
        i += 1


@dataclass(frozen=True)
class TLNConfiguration:
    terminations: tuple[Termination, ...]
    stage: Stage

    def __post_init__(self):
        terms = tuple(Termination(t) for t in self.terminations)
        object.__setattr__(self, "terminations", terms)
        if not terms:
            raise ConfigurationError("configuration must cover at least one port")
        _check_pairs(terms)
        has_thru = Termination.Thru in terms
        if self.stage is Stage.Step1 and has_thru:
            raise ConfigurationError("Step-1 configurations may not connect the DUT")
        if self.stage is Stage.Step2 and not has_thru:
            raise ConfigurationError("Step-2 configurations need at least one thru")

    @classmethod
    def from_terminations(cls, terms: Sequence[Termination]) -> "TLNConfiguration":
        stage = Stage.Step2 if Termination.Thru in terms else Stage.Step1
        return cls(tuple(terms), stage)

    @classmethod
    def from_token(cls, token: str) -> "TLNConfiguration":
        return cls.from_terminations([Termination.from_token(ch) for ch in token])

    @property
    def token(self) -> str:
        return "".join(t.token for t in self.terminations)

    @property
    def n_s(self) -> int:
        return len(self.terminations)

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(int(t) for t in self.terminations)

    def __str__(self) -> str:
        return self.token


def all_thru(n_s: int) -> TLNConfiguration:
    return TLNConfiguration((Termination.Thru,) * n_s, Stage.Step2)


@dataclass(frozen=True)
class TLNHardwareModel:
    """Non-ideal switch/load behaviour seen at the TLN ports."""

    gamma_a: complex = 0.9 * np.exp(0.3j)
    gamma_b: complex = -0.85 * np.exp(0.1j)
    gamma_c: complex = 0.05 * np.exp(1.0j)
    thru_s21: complex = 0.95 * np.exp(-0.7j)
    thru_s11: complex = 0.05
    thru_s22: complex = 0.05
    coupled_s21: complex = 0.9 * np.exp(-0.4j)
    coupled_s11: complex = 0.1
    idle_dut_reflection: complex = 0.9 * np.exp(0.2j)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, complex(getattr(self, name)))
        g = (self.gamma_a, self.gamma_b, self.gamma_c)
        if len({g[0], g[1], g[2]}) != 3:
            raise ConfigurationError("the three individual loads must be distinct")
        if any(abs(x) > 1 for x in g):
            raise ConfigurationError("load reflection magnitudes must not exceed 1")
        if abs(self.thru_s21) > 1 or abs(self.coupled_s21) > 1:
            raise ConfigurationError("thru/coupled transmission magnitudes must not exceed 1")

    def load(self, t: Termination) -> complex:
        return {
            Termination.LoadA: self.gamma_a,
            Termination.LoadB: self.gamma_b,
            Termination.LoadC: self.gamma_c,
        }[t]

    @classmethod
    def ideal(cls, **overrides) -> "TLNHardwareModel":
        """Lossless, reflection-free thru and coupled paths; loads short/open/match."""
        kw = dict(
            gamma_a=-1, gamma_b=1, gamma_c=0, thru_s21=1, thru_s11=0, thru_s22=0,
            coupled_s21=1, coupled_s11=0, idle_dut_reflection=1,
        )
        kw.update(overrides)
        return cls(**kw)


def synthesize_tln(config: TLNConfiguration, hw: TLNHardwareModel) -> ScatteringMatrix:
    """Assemble the 2 N_S port TLN matrix, ports ordered ``[OTA side ; DUT side]``."""
    n = config.n_s
    s = np.zeros((2 * n, 2 * n), dtype=complex)
    terms = config.terminations
    for i, t in enumerate(terms):
        cb, d = i, n + i
        if t is Termination.Thru:
            s[cb, cb] = hw.thru_s11
            s[d, d] = hw.thru_s22
            s[cb, d] = s[d, cb] = hw.thru_s21
            continue
        s[d, d] = hw.idle_dut_reflection
        if t in LOADS:
            s[cb, cb] = hw.load(t)
        elif t is Termination.CoupledLeft:
            s[cb, cb] = s[cb + 1, cb + 1] = hw.coupled_s11
            s[cb, cb + 1] = s[cb + 1, cb] = hw.coupled_s21
    partition = {"tln_ota_side": tuple(range(n)), "dut_side": tuple(range(n, 2 * n))}
    return ScatteringMatrix(s, partition)


def count_step1_configs(n_s: int) -> int:
    """Number of TLN configurations without any DUT connection."""
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    return sum(comb(n_s - r, r) * 3 ** (n_s - 2 * r) for r in range(n_s // 2 + 1))


def count_step2_configs(n_s: int) -> int:
    """Number of TLN configurations with at least one thru connection."""
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    return sum(
        comb(n_s - r, r) * (4 ** (n_s - 2 * r) - 3 ** (n_s - 2 * r)) for r in range(n_s // 2 + 1)
    )


def _generate(n_s: int, singles: Sequence[Termination]) -> Iterator[tuple[Termination, ...]]:
    # depth-first in kind-index order, which yields lexicographic order
    if n_s == 0:
        yield ()
        return
    head_options: list[tuple[Termination, ...]] = [(t,) for t in singles if t < Termination.CoupledLeft]
    if n_s >= 2:
        head_options.append((Termination.CoupledLeft, Termination.CoupledRight))
    head_options += [(t,) for t in singles if t > Termination.CoupledRight]
    for head in head_options:
        for tail in _generate(n_s - len(head), singles):
            yield head + tail


def enumerate_configs(n_s: int, stage: Stage, cap: int = ENUMERATION_CAP) -> list[TLNConfiguration]:
    """All admissible configurations of one stage, in canonical order."""
    count = count_step1_configs(n_s) if stage is Stage.Step1 else count_step2_configs(n_s)
    if count > cap:
        raise ConfigurationError(f"{count} configurations exceed the enumeration cap {cap}")
    singles = LOADS + ((Termination.Thru,) if stage is Stage.Step2 else ())
    out = []
    for terms in _generate(n_s, singles):
        if stage is Stage.Step2 and Termination.Thru not in terms:
            continue
        out.append(TLNConfiguration(terms, stage))
    return out


def step1_series(n_s: int, seed: int) -> list[TLNConfiguration]:
    """Short, duplicate-free Step-1 series covering every termination at every port.

    Three configurations give each port each individual load once (a random
    per-port permutation of A/B/C). Coupled pairs are then covered with two
    configurations: pairs starting at even ports, then pairs starting at odd
    ports; the remaining ports get random loads.
    """
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(3) for _ in range(n_s)]
    series = [
        TLNConfiguration(tuple(LOADS[perms[i][k]] for i in range(n_s)), Stage.Step1)
        for k in range(3)
    ]
    seen = {c.key for c in series}
    for start in (0, 1):
        if n_s - start < 2:
            continue
        while True:
            terms = [LOADS[rng.integers(3)] for _ in range(n_s)]
            for i in range(start, n_s - 1, 2):
                terms[i], terms[i + 1] = Termination.CoupledLeft, Termination.CoupledRight
            cfg = TLNConfiguration(tuple(terms), Stage.Step1)
            if cfg.key not in seen:
                break
        seen.add(cfg.key)
        series.append(cfg)
    return series


def step2_series(n_s: int, p: int, seed: int, cap: int = ENUMERATION_CAP) -> list[TLNConfiguration]:
    """All-thru first, then ``p - 1`` distinct random Step-2 configurations.

    Prefixes are stable: ``step2_series(n, k, s) == step2_series(n, p, s)[:k]``
    for ``k <= p``.
    """
    total = count_step2_configs(n_s)
    if not 1 <= p <= total:
        raise ConfigurationError(f"p={p} must lie in 1..{total} for n_s={n_s}")
    first = all_thru(n_s)
    rng = np.random.default_rng(seed)
    if total <= cap:
        pool = [c for c in enumerate_configs(n_s, Stage.Step2, cap) if c != first]
        order = rng.permutation(len(pool))
        return [first] + [pool[i] for i in order[: p - 1]]
    series, seen = [first], {first.key}
    while len(series) < p:
        cfg = _random_step2(n_s, rng)
        if cfg.key not in seen:
            seen.add(cfg.key)
            series.append(cfg)
    return series


def _random_step2(n_s: int, rng: np.random.Generator) -> TLNConfiguration:
    # not uniform over the Step-2 set; only used above the enumeration cap
    while True:
        terms: list[Termination] = []
        i = 0
        while i < n_s:
            k = rng.integers(5 if i < n_s - 1 else 4)
            if k == 4:
                terms += [Termination.CoupledLeft, Termination.CoupledRight]
                i += 2
            else:
                terms.append((*LOADS, Termination.Thru)[k])
                i += 1
        if Termination.Thru in terms:
            return TLNConfiguration(tuple(terms), Stage.Step2)
