"""Command-line front end: ser / overhead / complexity subcommands."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, RsmaLinkError
from .harness import Scenario, emit_report, parse_config, run_overhead_experiment, \
    run_ser_experiment
from .modem import CONSTELLATION_NAMES
from .nn import build_arch


def _add_scenario_flags(parser: argparse.ArgumentParser, with_receivers: bool) -> None:
    parser.add_argument("--config", help="JSON scenario file; flags override its values")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--snr-db", help="comma-separated sweep points, e.g. 12,15,18")
    if with_receivers:
        parser.add_argument("--receivers",
                            help="comma-separated subset of map,sic_perfect,sic_imperfect,mbdl")
    parser.add_argument("--pattern", help="training pattern: extensive, minimal, interpolating")
    parser.add_argument("--blocks", type=int, help="training blocks per trial")
    parser.add_argument("--trials", type=int, help="channel realizations per sweep point")
    parser.add_argument("--data-symbols", type=int, help="data symbols per trial")
    parser.add_argument("--workers", type=int, help="parallel trial workers")
    parser.add_argument("--out", help="output path (default: report.csv / report.json)")
    parser.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (default csv)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsmalink",
        description="Link-level simulator for 1-layer rate-splitting downlink")
    sub = parser.add_subparsers(dest="command", required=True)

    ser = sub.add_parser("ser", help="symbol-error-rate sweep over seeded trials")
    _add_scenario_flags(ser, with_receivers=True)

    over = sub.add_parser("overhead", help="training-overhead table per sweep point")
    _add_scenario_flags(over, with_receivers=False)

    sub.add_parser("complexity", help="print the network complexity table")
    return parser


def _scenario_from_args(args: argparse.Namespace) -> Scenario:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config!r}: {exc}") from exc
        payload = json.loads(text)
        if not isinstance(payload, dict):
            raise ConfigError("config: configuration must be a JSON object")
    else:
        payload = {"nt": 4, "k": 2}
    if args.snr_db is not None:
        payload["snr_db"] = [float(v) for v in args.snr_db.split(",") if v]
    if getattr(args, "receivers", None) is not None:
        payload["receivers"] = [v for v in args.receivers.split(",") if v]
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.trials is not None:
        payload["trials"] = args.trials
    if args.data_symbols is not None:
        payload["data_symbols"] = args.data_symbols
    if args.workers is not None:
        payload["workers"] = args.workers
    if args.pattern is not None or args.blocks is not None:
        training = dict(payload.get("training", {}))
        if args.pattern is not None:
            training["pattern"] = args.pattern
        if args.blocks is not None:
            training["blocks"] = args.blocks
        payload["training"] = training
    if "snr_db" not in payload:
        raise ConfigError("snr_db: provide --snr-db or a config file with snr_db")
    return parse_config(json.dumps(payload))


def _print_complexity() -> int:
    bits_by_name = [(name, bits) for name, bits in sorted(CONSTELLATION_NAMES.items(),
                                                          key=lambda kv: kv[1])]
    print("network complexity (trainable parameters / real multiplications per symbol)")
    print()
    header = f"{'target':>8} | {'common detector':>22} | {'cancellation + private detector':>34}"
    print(header)
    print("-" * len(header))
    for name, bits in bits_by_name:
        common = build_arch("common_detect", bits)
        ic2 = build_arch("ic_private_detect", bits, common_bits=2)
        ic4 = build_arch("ic_private_detect", bits, common_bits=4)
        slope_p = (ic4.num_params() - ic2.num_params()) // 2
        slope_m = (ic4.num_multiplies() - ic2.num_multiplies()) // 2
        base_p = ic2.num_params() - 2 * slope_p
        base_m = ic2.num_multiplies() - 2 * slope_m
        ic_cell = f"{base_p}+{slope_p}*Mc / {base_m}+{slope_m}*Mc"
        common_cell = f"{common.num_params()} / {common.num_multiplies()}"
        print(f"{name:>8} | {common_cell:>22} | {ic_cell:>34}")
    print()
    print("Mc = bits per common-stream symbol (2, 4, 6, or 8)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "complexity":
            return _print_complexity()

        scenario = _scenario_from_args(args)
        fmt = args.format or "csv"
        out = args.out or f"report.{fmt}"
        if args.command == "ser":
            report = run_ser_experiment(scenario)
        else:
            report = run_overhead_experiment(scenario)
        for path in emit_report(report, out, fmt):
            print(f"wrote {path}")
        return 0
    except (RsmaLinkError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
