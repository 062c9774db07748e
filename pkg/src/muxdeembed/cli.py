"""Command-line front end: ``muxdeembed <command> ...``.

Exit codes: 0 on success, 2 for invalid arguments, 1 for numerical or file
errors. Relative output paths are placed under ``$MUXDEEMBED_OUTPUT_DIR``
when that variable is set.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .campaign import make_scenario, simulate_campaign
from .diagnostics import jacobian_rank_at, mse, sweep
from .estimator import EstimatorSettings, estimate, upper
from .fileio import (
    load_campaign,
    load_scenario,
    save_campaign,
    save_report,
    save_scenario,
)
from .network import random_passive_reciprocal
from .tln import (
    Stage,
    count_step1_configs,
    count_step2_configs,
    enumerate_configs,
    step2_series,
)

logger = logging.getLogger("muxdeembed")

PRESETS = {
    "desk": {
        "n_s": 4,
        "n_a": 8,
        "p_list": list(range(1, 31)),
        "splits": [(1, 1), (2, 2), (3, 3), (4, 4)],
        "seeds": [0, 1, 2, 3, 4],
    }
}


class CliError(Exception):
    """Numerical or file failure, reported with exit code 1."""


def _out_path(p: str) -> Path:
    path = Path(p)
    base = os.environ.get("MUXDEEMBED_OUTPUT_DIR")
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _p_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        try:
            if "-" in part:
                a, b = part.split("-")
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad p list {text!r}") from None
    return out


def _splits(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        try:
            a, b = part.lower().split("x")
            out.append((int(a), int(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"splits look like '1x1,2x2', got {text!r}") from None
    return out


def _db(text: str) -> float:
    if text.lower() in ("inf", "none", "off"):
        return math.inf
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number of dB or 'inf', got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("dB values must be positive")
    return v


def _add_estimator_args(sp: argparse.ArgumentParser) -> None:
    d = EstimatorSettings()
    g = sp.add_argument_group("estimator")
    g.add_argument("--initial-step", type=float, default=d.initial_step)
    g.add_argument("--decay", type=float, default=d.decay)
    g.add_argument("--max-iters", type=int, default=d.max_iters)
    g.add_argument("--loss-tolerance", type=float, default=d.loss_tolerance)
    g.add_argument("--patience", type=int, default=d.patience)
    g.add_argument("--restarts", dest="n_restarts", type=int, default=d.n_restarts)
    g.add_argument("--init-scale", type=float, default=d.init_scale)
    g.add_argument("--estimator-seed", type=int, default=d.seed)


def _settings(args) -> EstimatorSettings:
    kw = {f.name: getattr(args, f.name) for f in fields(EstimatorSettings) if hasattr(args, f.name)}
    kw["seed"] = args.estimator_seed
    try:
        return EstimatorSettings(**kw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="muxdeembed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file with option defaults (command-line flags win)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("generate", help="random synthetic scenario")
    sp.add_argument("--n-s", type=int, default=4)
    sp.add_argument("--n-a", type=int, default=8)
    sp.add_argument("--n-t", type=int, default=None, help="transmitting ports (default n_a // 2)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--snr-db", type=_db, default=math.inf)
    sp.add_argument("--ota-error-db", type=_db, default=math.inf)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("simulate", help="simulate a Step-2 campaign")
    sp.add_argument("scenario")
    sp.add_argument("--p", type=int, default=30)
    sp.add_argument("--tx", type=_int_list, default=None)
    sp.add_argument("--rx", type=_int_list, default=None)
    sp.add_argument("--snr-db", type=_db, default=None, help="override the scenario SNR")
    sp.add_argument("--ota-error-db", type=_db, default=None, help="override the scenario OTA error")
    sp.add_argument("--seed", type=int, default=0, help="configuration-series and noise seed")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("estimate", help="estimate the DUT from a campaign")
    sp.add_argument("campaign")
    _add_estimator_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace", default=None, help="loss-trace CSV (iteration,loss)")

    sp = sub.add_parser("rank", help="Jacobian effective rank of a campaign")
    sp.add_argument("campaign")
    sp.add_argument("--theta0", choices=("truth", "random"), default="truth")
    sp.add_argument("--seed", type=int, default=0, help="seed of the random theta0")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("sweep", help="(m, p) sweep of effective rank and MSE")
    sp.add_argument("scenario", nargs="?", default=None)
    sp.add_argument("--preset", choices=sorted(PRESETS), default=None)
    sp.add_argument("--p-list", type=_p_list, default=None)
    sp.add_argument("--splits", type=_splits, default=None)
    sp.add_argument("--seeds", type=_int_list, default=None)
    sp.add_argument("--max-choices", type=int, default=16)
    sp.add_argument("--theta0", choices=("truth", "random"), default="truth")
    sp.add_argument("--no-estimate", action="store_true", help="rank only; MSE columns are nan")
    sp.add_argument("--jobs", type=int, default=1)
    _add_estimator_args(sp)
    sp.add_argument("--out", required=True, help="per-row CSV")
    sp.add_argument("--agg-out", default=None, help="aggregate CSV (default: <out>.agg.csv)")

    sp = sub.add_parser("count", help="count admissible TLN configurations")
    sp.add_argument("n_s", type=int)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(cfg, dict):
        parser.error("config file must hold a JSON object")
    # keys are option names with '-' or '_' ("n_s", "snr-db", ...); a nested
    # object per command name applies to that command only
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in sub_action.choices.items():
        dests = {a.dest for a in sp._actions}
        flat = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
        flat.update({k.replace("-", "_"): v for k, v in cfg.get(name, {}).items()})
        if "restarts" in flat:
            flat["n_restarts"] = flat.pop("restarts")
        sp.set_defaults(**{k: v for k, v in flat.items() if k in dests})


def cmd_generate(args) -> None:
    if args.n_s < 1 or args.n_a < 2:
        raise argparse.ArgumentTypeError("need n_s >= 1 and n_a >= 2")
    sc = make_scenario(
        args.n_s, args.n_a, args.seed, n_t=args.n_t, snr_db=args.snr_db, ota_knowledge_error_db=args.ota_error_db
    )
    save_scenario(_out_path(args.out), sc)
    print(f"scenario n_s={sc.n_s} n_a={sc.n_a} tx={list(sc.partition.tx)} rx={list(sc.partition.rx)} -> {args.out}")


def cmd_simulate(args) -> None:
    sc = load_scenario(args.scenario)
    if args.snr_db is not None:
        sc = replace(sc, snr_db=args.snr_db)
    if args.ota_error_db is not None:
        sc = replace(sc, ota_knowledge_error_db=args.ota_error_db)
    tx = args.tx if args.tx is not None else list(sc.partition.tx)
    rx = args.rx if args.rx is not None else list(sc.partition.rx)
    if not tx or not rx or set(tx) & set(rx) or any(i < 0 or i >= sc.n_a for i in tx + rx):
        raise argparse.ArgumentTypeError(f"tx {tx} / rx {rx} must be disjoint, non-empty, within 0..{sc.n_a - 1}")
    try:
        configs = step2_series(sc.n_s, args.p, args.seed)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    campaign = simulate_campaign(sc, configs, tx, rx, seed=args.seed)
    save_campaign(_out_path(args.out), campaign, sc)
    print(f"campaign m={campaign.m} p={campaign.p} measurements={campaign.m * campaign.p} -> {args.out}")


def cmd_estimate(args) -> None:
    settings = _settings(args)
    campaign, sc = load_campaign(args.campaign)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = estimate(campaign, settings)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    extra = {"m": campaign.m, "p": campaign.p}
    line = f"final_loss={report.final_loss:.6e} converged={'yes' if report.converged else 'no'}"
    if sc is not None:
        err = mse(report.s_dut_hat, sc.s_dut_true)
        err_n = mse(report.s_dut_hat, sc.s_dut_true, normalized=True)
        extra.update(mse=err, mse_normalized=err_n)
        line += f" mse={err:.6e} mse_normalized={err_n:.6e}"
    save_report(_out_path(args.out), report, extra, _out_path(args.trace) if args.trace else None)
    print(line)


def cmd_rank(args) -> None:
    campaign, sc = load_campaign(args.campaign)
    if args.theta0 == "truth":
        if sc is None:
            raise CliError("campaign file carries no ground truth; use --theta0 random")
        th0 = upper(sc.s_dut_true)
    else:
        th0 = upper(random_passive_reciprocal(campaign.n_s, args.seed, 0.9))
    rep = jacobian_rank_at(th0, campaign)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tx_rx", "m", "p", "d", "effective_rank", "k", "singular_value"])
    for k, sv in enumerate(rep.singular_values, start=1):
        w.writerow([rep.tx_rx_label, rep.m, rep.p, rep.d, repr(rep.effective_rank), k, repr(float(sv))])
    _out_path(args.out).write_text(buf.getvalue())
    print(f"effective_rank={rep.effective_rank:.6f} m={rep.m} p={rep.p} d={rep.d}")


def cmd_sweep(args) -> None:
    preset = PRESETS.get(args.preset, {})
    p_list = args.p_list or preset.get("p_list")
    splits = args.splits or preset.get("splits")
    seeds = args.seeds if args.seeds is not None else preset.get("seeds", [0])
    if not p_list or not splits:
        raise argparse.ArgumentTypeError("sweep needs --p-list and --splits (or --preset)")
    if args.scenario:
        sc = load_scenario(args.scenario)
    elif preset:
        sc = make_scenario(preset["n_s"], preset["n_a"], 0)
    else:
        raise argparse.ArgumentTypeError("sweep needs a scenario file or --preset")
    if args.jobs < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    try:
        result = sweep(
            sc,
            p_list,
            splits,
            seeds,
            settings=None if args.no_estimate else _settings(args),
            max_choices=args.max_choices,
            theta0=args.theta0,
            jobs=args.jobs,
        )
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    out = _out_path(args.out)
    out.write_text(result.rows_csv())
    agg = _out_path(args.agg_out) if args.agg_out else out.with_suffix(".agg.csv")
    agg.write_text(result.aggregate_csv())
    print(f"sweep rows={len(result.rows)} -> {out} (aggregate {agg})")


def cmd_count(args) -> None:
    if args.n_s < 1:
        raise argparse.ArgumentTypeError("n_s must be >= 1")
    c1, c2 = count_step1_configs(args.n_s), count_step2_configs(args.n_s)
    verified = "skipped"
    if args.n_s <= 6:
        ok = len(enumerate_configs(args.n_s, Stage.Step1)) == c1 and len(enumerate_configs(args.n_s, Stage.Step2)) == c2
        verified = "yes" if ok else "no"
    print(f"step1={c1} step2={c2} verified={verified}")
    if verified == "no":
        raise CliError("enumeration disagrees with the closed-form counts")


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "rank": cmd_rank,
    "sweep": cmd_sweep,
    "count": cmd_count,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"muxdeembed {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical / IO failures
        print(f"muxdeembed {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
