"""Touchstone v1 files, campaign/scenario JSON documents and estimate reports.

Complex numbers in JSON are always ``[re, im]`` pairs. Python's float repr is
round-trip exact, so save -> load reproduces every matrix bit for bit.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .campaign import MeasurementCampaign, Scenario
from .network import PFRealization, PortPartition, ScatteringMatrix
from .tln import ConfigurationError, TLNConfiguration, TLNHardwareModel

SCHEMA_VERSION = 1


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class SchemaError(ValueError):
    pass


# --------------------------------------------------------------------------- Touchstone

_FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_FORMATS = ("RI", "MA", "DB")


@dataclass
class TouchstoneDocument:
    n_ports: int
    frequency_points: list[tuple[float, np.ndarray]]
    format: str = "RI"
    reference_impedance: float = 50.0
    comments: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.format not in _FORMATS:
            raise ValueError(f"unknown format {self.format!r}")
        last = -math.inf
        for f, s in self.frequency_points:
            if np.shape(s) != (self.n_ports, self.n_ports):
                raise ValueError(f"matrix at {f} Hz is not {self.n_ports}x{self.n_ports}")
            if not f > last:
                raise ValueError("frequencies must be strictly increasing")
            last = f


def _pair_to_complex(a: float, b: float, fmt: str) -> complex:
    if fmt == "RI":
        return complex(a, b)
    mag = a if fmt == "MA" else 10 ** (a / 20)
    ang = math.radians(b)
    return complex(mag * math.cos(ang), mag * math.sin(ang))


def _complex_to_pair(z: complex, fmt: str) -> tuple[float, float]:
    if fmt == "RI":
        return z.real, z.imag
    mag, ang = abs(z), math.degrees(math.atan2(z.imag, z.real))
    if fmt == "MA":
        return mag, ang
    return 20 * math.log10(mag) if mag > 0 else -math.inf, ang


def _parse_option_line(line: str, lineno: int) -> tuple[float, str, float]:
    # every field must be explicit: a dropped token would otherwise fall back
    # to a default and silently change the meaning of the data
    toks = line[1:].split()
    found: dict[str, Any] = {}
    offset = 1
    i = 0
    while i < len(toks):
        t = toks[i].upper()
        col = line.find(toks[i], offset) + 1
        offset = col + len(toks[i]) - 1
        if t in _FREQ_UNITS:
            kind, val = "unit", _FREQ_UNITS[t]
        elif t in _FORMATS:
            kind, val = "format", t
        elif t == "S":
            kind, val = "parameter", t
        elif t in ("Y", "Z", "H", "G"):
            raise ParseError(f"only S-parameter files are supported, got {toks[i]!r}", lineno, col)
        elif t == "R":
            if i + 1 >= len(toks):
                raise ParseError("reference impedance missing after 'R'", lineno, col)
            try:
                val = float(toks[i + 1])
            except ValueError:
                raise ParseError(f"bad reference impedance {toks[i + 1]!r}", lineno, col) from None
            if not (math.isfinite(val) and val > 0):
                raise ParseError(f"reference impedance must be positive, got {toks[i + 1]!r}", lineno, col)
            kind = "impedance"
            i += 1
        else:
            raise ParseError(f"unknown option token {toks[i]!r}", lineno, col)
        if kind in found:
            raise ParseError(f"repeated {kind} in option line", lineno, col)
        found[kind] = val
        i += 1
    missing = [k for k in ("unit", "parameter", "format", "impedance") if k not in found]
    if missing:
        raise ParseError(f"option line lacks {', '.join(missing)}", lineno, 1)
    return found["unit"], found["format"], found["impedance"]


def _record_layout(n: int) -> list[int]:
    """Value counts per physical line of one frequency record."""
    if n == 1:
        return [3]
    if n == 2:
        return [9]
    per_row = [min(4, n - c) * 2 for c in range(0, n, 4)]
    layout = []
    for _ in range(n):
        layout.extend(per_row)
    layout[0] += 1  # the frequency
    return layout


def parse_touchstone(text: str, n_ports: int | None = None) -> TouchstoneDocument:
    """Parse Touchstone v1 content into a document with RI-valued matrices.

    ``n_ports`` is inferred from the first frequency record when omitted.
    Record lines must follow the v1 layout exactly (one line per 1- or 2-port
    record; for 3+ ports, one row per line group with at most four pairs per line).
    """
    comments: list[str] = []
    option: tuple[float, str, float] | None = None
    data: list[tuple[int, list[str], list[int]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body, bang, comment = raw.partition("!")
        if bang and not body.strip():
            comments.append(comment.strip())
        if not body.strip():
            continue
        if body.lstrip().startswith("#"):
            if option is not None:
                raise ParseError("second option line", lineno, 1)
            if data:
                raise ParseError("option line after data", lineno, 1)
            option = _parse_option_line(body.strip(), lineno)
            continue
        if body.lstrip().startswith("["):
            raise ParseError("Touchstone v2 keywords are not supported", lineno, 1)
        toks, cols = [], []
        for mt in re.finditer(r"\S+", body):
            toks.append(mt.group())
            cols.append(mt.start() + 1)
        data.append((lineno, toks, cols))
    if option is None:
        raise ParseError("missing option line ('# <unit> S <format> R <z0>')")
    unit, fmt, z0 = option

    if n_ports is None:
        if not data:
            raise ParseError("no data and no port count given")
        n_vals = len(data[0][1])
        k = 1
        while k < len(data) and len(data[k][1]) % 2 == 0:
            n_vals += len(data[k][1])
            k += 1
        n2 = (n_vals - 1) / 2
        n_ports = int(round(math.sqrt(n2))) if n2 > 0 else 0
        if n_ports < 1 or n_ports**2 != n2:
            raise ParseError(f"cannot infer port count from {n_vals} values", data[0][0])

    layout = _record_layout(n_ports)
    points: list[tuple[float, np.ndarray]] = []
    pos = 0
    last_f = -math.inf
    while pos < len(data):
        vals: list[float] = []
        for li, expect in enumerate(layout):
            if pos >= len(data):
                raise ParseError(
                    f"truncated record: expected {len(layout) - li} more line(s) for {n_ports}-port data",
                    data[-1][0],
                )
            lineno, toks, cols = data[pos]
            if len(toks) != expect:
                raise ParseError(f"expected {expect} values, found {len(toks)}", lineno, cols[0])
            for t, c in zip(toks, cols):
                try:
                    v = float(t)
                except ValueError:
                    raise ParseError(f"not a number: {t!r}", lineno, c) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {t!r}", lineno, c)
                vals.append(v)
            pos += 1
        lineno0 = data[pos - len(layout)][0]
        freq = vals[0] * unit
        if not freq > last_f:
            raise ParseError("frequencies must be strictly increasing", lineno0, 1)
        if freq < 0:
            raise ParseError("negative frequency", lineno0, 1)
        last_f = freq
        pairs = [_pair_to_complex(vals[1 + 2 * k], vals[2 + 2 * k], fmt) for k in range(n_ports**2)]
        s = np.array(pairs, dtype=complex).reshape(n_ports, n_ports)
        if n_ports == 2:
            s = s.T  # 2-port order is S11 S21 S12 S22
        points.append((freq, s))
    return TouchstoneDocument(n_ports, points, fmt, z0, comments)


def write_touchstone(doc: TouchstoneDocument, fmt: str | None = None) -> str:
    fmt = (fmt or doc.format).upper()
    if fmt not in _FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    lines = [f"! {c}" if c else "!" for c in doc.comments]
    lines.append(f"# Hz S {fmt} R {doc.reference_impedance!r}")
    n = doc.n_ports
    for f, s in doc.frequency_points:
        s = np.asarray(s, dtype=complex)
        if n == 2:
            order = [s[0, 0], s[1, 0], s[0, 1], s[1, 1]]
            rows = [order]
        else:
            rows = [list(s[i]) for i in range(n)]
        first = True
        for row in rows:
            for c in range(0, len(row), 4 if n > 2 else len(row)):
                chunk = row[c : c + (4 if n > 2 else len(row))]
                vals = [v for z in chunk for v in _complex_to_pair(complex(z), fmt)]
                if any(not math.isfinite(v) for v in vals):
                    raise ValueError("cannot write a zero magnitude in DB format")
                toks = [repr(float(v)) for v in vals]
                if first:
                    toks.insert(0, repr(float(f)))
                    first = False
                lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


def read_touchstone(path) -> TouchstoneDocument:
    path = Path(path)
    m = re.search(r"\.s(\d+)p$", path.name, re.IGNORECASE)
    return parse_touchstone(path.read_text(), int(m.group(1)) if m else None)


# --------------------------------------------------------------------------- JSON helpers


def _enc(a) -> Any:
    """Complex scalar/array -> nested lists with [re, im] leaves."""
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        z = complex(a)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise SchemaError("non-finite value cannot be serialized")
        return [z.real, z.imag]
    return [_enc(x) for x in a]


def _dec(obj, ndim: int, where: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=float) if _is_nested_numeric(obj) else None
    if arr is None or arr.ndim != ndim + 1 or arr.shape[-1] != 2:
        raise SchemaError(f"{where}: expected a {ndim}-d array of [re, im] pairs")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{where}: non-finite value")
    out = np.empty(arr.shape[:-1], dtype=complex)
    # assign parts separately so signed zeros survive
    out.real, out.imag = arr[..., 0], arr[..., 1]
    return out


def _is_nested_numeric(obj) -> bool:
    if isinstance(obj, bool):
        return False
    if isinstance(obj, (int, float)):
        return True
    if isinstance(obj, list):
        return all(_is_nested_numeric(x) for x in obj)
    return False


def _opt_float(x: float) -> float | None:
    return None if math.isinf(x) else float(x)


def _from_opt(x, where: str) -> float:
    if x is None:
        return math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise SchemaError(f"{where}: expected a finite number or null")
    return float(x)


def _req(doc: dict, key: str, kind, where: str = ""):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"missing required field {where}{key!r}")
    val = doc[key]
    if kind is not None and (not isinstance(val, kind) or isinstance(val, bool) and kind is not bool):
        raise SchemaError(f"field {where}{key!r} has wrong type {type(val).__name__}")
    return val


def _check_version(doc: dict) -> None:
    v = _req(doc, "schema_version", int)
    if v != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {v} (this build reads {SCHEMA_VERSION})")


def _loads(text: str) -> dict:
    def reject_constant(name):
        raise SchemaError(f"non-finite value {name} in file")

    try:
        doc = json.loads(text, parse_constant=reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed or truncated file: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    return doc


def _dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


# --------------------------------------------------------------------------- scenario


def _hw_to_dict(hw: TLNHardwareModel) -> dict:
    return {k: _enc(getattr(hw, k)) for k in hw.__dataclass_fields__}


def _hw_from_dict(d: dict) -> TLNHardwareModel:
    if not isinstance(d, dict):
        raise SchemaError("hw must be an object")
    kw = {}
    for k in TLNHardwareModel.__dataclass_fields__:
        kw[k] = complex(_dec(_req(d, k, list, "hw."), 0, f"hw.{k}"))
    unknown = set(d) - set(kw)
    if unknown:
        raise SchemaError(f"unknown hw fields {sorted(unknown)}")
    return TLNHardwareModel(**kw)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "n_s": sc.n_s,
        "n_a": sc.n_a,
        "tx": list(sc.partition.tx),
        "rx": list(sc.partition.rx),
        "snr_db": _opt_float(sc.snr_db),
        "ota_knowledge_error_db": _opt_float(sc.ota_knowledge_error_db),
        "seed": sc.seed,
        "hw": _hw_to_dict(sc.hw),
        "s_ota": _enc(sc.s_ota.entries),
        "s_dut_true": _enc(sc.s_dut_true.entries),
    }


def scenario_from_dict(d: dict) -> Scenario:
    n_s, n_a = _req(d, "n_s", int), _req(d, "n_a", int)
    try:
        part = PortPartition(n_a, n_s, _req(d, "tx", list), _req(d, "rx", list))
        s_ota = _dec(_req(d, "s_ota", list), 2, "s_ota")
        s_dut = _dec(_req(d, "s_dut_true", list), 2, "s_dut_true")
        return Scenario(
            s_ota=ScatteringMatrix(s_ota),
            hw=_hw_from_dict(_req(d, "hw", dict)),
            s_dut_true=ScatteringMatrix(s_dut),
            partition=part,
            snr_db=_from_opt(_req(d, "snr_db", None), "snr_db"),
            ota_knowledge_error_db=_from_opt(_req(d, "ota_knowledge_error_db", None), "ota_knowledge_error_db"),
            seed=_req(d, "seed", int),
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"invalid scenario: {exc}") from exc


def save_scenario(path, sc: Scenario) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "scenario", **scenario_to_dict(sc)}
    Path(path).write_text(_dumps(doc))


def load_scenario(path) -> Scenario:
    doc = _loads(Path(path).read_text())
    _check_version(doc)
    if doc.get("kind") != "scenario":
        raise SchemaError("not a scenario file")
    return scenario_from_dict(doc)


# --------------------------------------------------------------------------- campaign


def campaign_to_dict(c: MeasurementCampaign, scenario: Scenario | None = None) -> dict:
    n_a = c.pf_known[0].n_a if c.pf_known else len(c.tx) + len(c.rx)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "campaign",
        "n_s": c.n_s,
        "n_a": n_a,
        "tx": list(c.tx),
        "rx": list(c.rx),
        "snr_db": _opt_float(c.snr_db),
        "ota_knowledge_error_db": _opt_float(c.ota_knowledge_error_db),
        "noise_sigma": c.noise_sigma,
        "configs": [cfg.token for cfg in c.configs],
        "h_meas": [_enc(h) for h in c.h_meas],
        "pf_known": [
            {"s_aa": _enc(pf.s_aa), "s_as": _enc(pf.s_as), "s_sa": _enc(pf.s_sa), "s_ss": _enc(pf.s_ss)}
            for pf in c.pf_known
        ],
    }
    if scenario is not None:
        doc["scenario"] = scenario_to_dict(scenario)
    return doc


def campaign_from_dict(doc: dict) -> tuple[MeasurementCampaign, Scenario | None]:
    _check_version(doc)
    if doc.get("kind") != "campaign":
        raise SchemaError("not a campaign file")
    n_s, n_a = _req(doc, "n_s", int), _req(doc, "n_a", int)
    tx, rx = _req(doc, "tx", list), _req(doc, "rx", list)
    if not all(isinstance(i, int) and not isinstance(i, bool) for i in tx + rx):
        raise SchemaError("tx/rx must be integer lists")
    tokens = _req(doc, "configs", list)
    h_list = _req(doc, "h_meas", list)
    pf_list = _req(doc, "pf_known", list)
    noise_sigma = _req(doc, "noise_sigma", None)
    if noise_sigma is not None and (isinstance(noise_sigma, bool) or not isinstance(noise_sigma, (int, float))
                                    or not math.isfinite(noise_sigma) or noise_sigma < 0):
        raise SchemaError("noise_sigma must be a non-negative number or null")
    if not len(tokens) == len(h_list) == len(pf_list):
        raise SchemaError(f"configs/h_meas/pf_known lengths differ: {len(tokens)}, {len(h_list)}, {len(pf_list)}")
    try:
        configs = [TLNConfiguration.from_token(t) if isinstance(t, str) else None for t in tokens]
    except ConfigurationError as exc:
        raise SchemaError(f"bad configuration token: {exc}") from None
    if any(c is None or c.n_s != n_s for c in configs):
        raise SchemaError("configuration tokens must be strings of length n_s")
    hs = [_dec(h, 2, f"h_meas[{r}]") for r, h in enumerate(h_list)]
    pfs = []
    for r, blk in enumerate(pf_list):
        if not isinstance(blk, dict) or set(blk) != {"s_aa", "s_as", "s_sa", "s_ss"}:
            raise SchemaError(f"pf_known[{r}] must have exactly s_aa, s_as, s_sa, s_ss")
        arrs = {k: _dec(blk[k], 2, f"pf_known[{r}].{k}") for k in blk}
        try:
            pf = PFRealization(config_id=configs[r].token, **arrs)
        except ValueError as exc:
            raise SchemaError(f"pf_known[{r}]: {exc}") from None
        if pf.n_a != n_a or pf.n_s != n_s:
            raise SchemaError(f"pf_known[{r}] has wrong port counts")
        pfs.append(pf)
    try:
        campaign = MeasurementCampaign(
            configs=tuple(configs),
            tx=tuple(tx),
            rx=tuple(rx),
            h_meas=tuple(hs),
            pf_known=tuple(pfs),
            n_s=n_s,
            noise_sigma=None if noise_sigma is None else float(noise_sigma),
            snr_db=_from_opt(_req(doc, "snr_db", None), "snr_db"),
            ota_knowledge_error_db=_from_opt(_req(doc, "ota_knowledge_error_db", None), "ota_knowledge_error_db"),
        )
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"inconsistent campaign: {exc}") from None
    if any(i < 0 or i >= n_a for i in campaign.tx + campaign.rx) or set(campaign.tx) & set(campaign.rx):
        raise SchemaError("tx/rx indices out of range or overlapping")
    scenario = scenario_from_dict(doc["scenario"]) if "scenario" in doc else None
    return campaign, scenario


def save_campaign(path, campaign: MeasurementCampaign, scenario: Scenario | None = None) -> None:
    Path(path).write_text(_dumps(campaign_to_dict(campaign, scenario)))


def load_campaign(path) -> tuple[MeasurementCampaign, Scenario | None]:
    return campaign_from_dict(_loads(Path(path).read_text()))


# --------------------------------------------------------------------------- reports


def report_to_dict(report, extra: dict | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "estimate_report",
        "theta_hat": _enc(report.theta_hat),
        "s_dut_hat": _enc(report.s_dut_hat.entries),
        "final_loss": report.final_loss,
        "restart_losses": list(report.restart_losses),
        "best_restart": report.best_restart,
        "converged": report.converged,
        "iterations": len(report.loss_trace),
    }
    if extra:
        doc.update(extra)
    return doc


def save_report(path, report, extra: dict | None = None, trace_csv=None) -> None:
    """Write the report document and, optionally, the loss trace as ``iteration,loss`` CSV."""
    Path(path).write_text(_dumps(report_to_dict(report, extra)))
    if trace_csv is not None:
        lines = ["iteration,loss"] + [f"{i},{v!r}" for i, v in enumerate(report.loss_trace, start=1)]
        Path(trace_csv).write_text("\n".join(lines) + "\n")


def load_report(path) -> dict:
    doc = _loads(Path(path).read_text())
    _check_version(doc)
    if doc.get("kind") != "estimate_report":
        raise SchemaError("not an estimate report")
    doc["theta_hat"] = _dec(_req(doc, "theta_hat", list), 1, "theta_hat")
    doc["s_dut_hat"] = _dec(_req(doc, "s_dut_hat", list), 2, "s_dut_hat")
    return doc
