#!/usr/bin/env python3
"""
Two-Level PIR Toolkit
=====================

Command-line driver for rates, NS parameter tables, end-to-end retrievals,
privacy audits and rate sweeps.

Usage:
    python -m two_level_pir <command> [options]

Examples:
    python -m two_level_pir rates --n 4 --t1 2 --k1 2 --t2 1 --k2 4
    python -m two_level_pir retrieve --scheme ns --n 4 --t1 2 --k1 2 --t2 1 --k2 4 --target 1 --seed 42
    python -m two_level_pir audit --scheme nb --n 4 --t1 2 --k1 2 --t2 1 --k2 4 --protected low
    python -m two_level_pir sweep --preset k1-gap --out k1_gap.csv
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from . import database, ns_engine
from .capacity_calc import (
    Scheme, SweepRow, SweepSpec, SystemParams, best_scheme, decimal_string, fraction_string,
    matches_tightened_system, rate_report, sweep, tightened_upper_bound,
)
from .config import APP_TITLE, APP_VERSION, DEFAULT_PORT_BASE, LOG_FILE, SWEEP_PRESETS, TRANSPORTS
from .exceptions import ParameterError, PirError, RetrievalError
from .exporter import SweepExporter
from .net_harness import resolve_seed, retrieve
from .ns_params import build_table, reduction_factor, verify_group_properties
from .privacy_audit import AuditTarget, audit, build_broken_plan

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

PARAM_FLAGS = ("n", "t1", "k1", "t2", "k2")


def setup_logging(verbose: bool = False, log_file: Optional[str] = LOG_FILE) -> None:
    """Setup logging configuration."""
    # Configure root logger
    root_logger = logging.getLogger()

    # Clear any existing handlers
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    app_level = logging.DEBUG if verbose else logging.INFO

    # Create formatters
    console_formatter = logging.Formatter('%(levelname)s - %(message)s')
    file_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # Console handler on stderr so JSON and CSV on stdout stay clean
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(app_level if verbose else logging.WARNING)
    console_handler.setFormatter(console_formatter)

    app_logger = logging.getLogger("two_level_pir")
    for handler in app_logger.handlers[:]:
        app_logger.removeHandler(handler)
        handler.close()
    app_logger.setLevel(logging.DEBUG)
    app_logger.addHandler(console_handler)

    # File handler (more detailed)
    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(file_formatter)
        app_logger.addHandler(file_handler)

    # Suppress noisy third-party loggers unless in verbose mode
    if not verbose:
        logging.getLogger('numexpr').setLevel(logging.WARNING)
        logging.getLogger('openpyxl').setLevel(logging.WARNING)


# --- Argument handling ------------------------------------------------------


def add_param_flags(parser: argparse.ArgumentParser, required: bool = True) -> None:
    group = parser.add_argument_group("system parameters (N, T1:K1, T2:K2)")
    for flag in PARAM_FLAGS:
        group.add_argument(f"--{flag}", type=int, required=required, help=f"{flag.upper()}")
    group.add_argument("--modulus", type=int, default=None, help="Field modulus q (default: smallest valid prime)")
    group.add_argument("--no-reduce", action="store_true", help="Keep the full message length N^K2")


def params_from_args(args: argparse.Namespace) -> SystemParams:
    p = SystemParams(N=args.n, T1=args.t1, K1=args.k1, T2=args.t2, K2=args.k2)
    overrides: Dict[str, Any] = {}
    if getattr(args, "modulus", None) is not None:
        overrides["q"] = args.modulus
    if getattr(args, "no_reduce", False):
        overrides["reduction"] = 1
    return p.with_overrides(**overrides) if overrides else p


def add_common_flags(parser: argparse.ArgumentParser, formats: Sequence[str] = ("text", "json")) -> None:
    parser.add_argument("--format", choices=formats, default="text", help="Output format (default: text)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    parser.add_argument("--log-file", default=LOG_FILE, help=f"Log file (default: {LOG_FILE})")


def resolve_scheme(p: SystemParams, requested: str) -> str:
    """Concrete scheme name; auto picks the better rate and NS on ties."""
    if requested.lower() != "auto":
        return requested.upper()
    if p.K1 == p.K2:
        return "NS"
    return "NB" if best_scheme(p) is Scheme.NB else "NS"


def emit(data: Any, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(data, indent=2, sort_keys=False))
    else:
        print(data)


# --- Commands ---------------------------------------------------------------


def cmd_rates(args: argparse.Namespace) -> int:
    p = params_from_args(args)
    report = rate_report(p)
    document = report.to_dict()

    if args.format == "json":
        if matches_tightened_system(p):
            document["tightened_upper_bound"] = fraction_string(tightened_upper_bound())
        emit(document, "json")
    elif args.format == "csv":
        print(SweepExporter().to_csv_text([SweepRow(params=p, report=report)]), end="")
    else:
        print(f"📊 Rates for {p.label}")
        for name in ("r_ns", "r_nb", "r_upper", "r_naive"):
            value = getattr(report, name)
            print(f"  {name:<8} {fraction_string(value):>12}  ≈ {decimal_string(value)}")
        print(f"  gap to bound      {fraction_string(report.d_gap)}")
        print(f"  coding gain       {fraction_string(report.coding_gain)}")
        print(f"  best scheme       {report.best_scheme.value}")
        if matches_tightened_system(p):
            print(f"  tightened bound   {fraction_string(tightened_upper_bound())} "
                  f"(below the general bound {fraction_string(report.r_upper)})")
    return EXIT_OK


def cmd_params(args: argparse.Namespace) -> int:
    p = params_from_args(args)
    reduction = ns_engine.resolve_reduction(p, reduction_factor(p))
    table = build_table(p)
    reduced = table.scaled(divisor=reduction)

    document = reduced.to_dict()
    document["reduction"] = reduction
    document = {key: document[key] for key in ("params", "M", "L", "reduction", "d", "classes")}
    report = verify_group_properties(p) if args.check else None

    if args.format == "json":
        if report is not None:
            document["group_properties"] = report.to_dict()
        emit(document, "json")
    else:
        print(f"📊 NS parameters for {p.label}: M={table.M}, L={reduced.L} (reduction {reduction})")
        frame = pd.DataFrame(document["classes"])
        print(frame.to_string(index=False))
        if report is not None:
            status = "✓" if report.passed else "❌"
            print(f"{status} Group properties: {len(report.checks) - len(report.failures)}/{len(report.checks)} hold")
            for failure in report.failures:
                print(f"  ❌ {failure.item}: {failure.description} ({failure.lhs} {failure.relation} {failure.rhs})")

    if report is not None and not report.passed:
        return EXIT_FAILED
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    p = params_from_args(args)
    if not 1 <= args.target <= p.K2:
        raise ParameterError(f"--target must lie in 1..{p.K2}, got {args.target}")
    scheme = resolve_scheme(p, args.scheme)
    if args.scheme.lower() == "auto" and args.format == "text":
        verdict = best_scheme(p) if p.K2 > p.K1 else Scheme.TIE
        note = "rates coincide" if verdict is Scheme.TIE else f"{verdict.value} has the higher rate"
        print(f"Auto-selected {scheme} ({note})")

    seed = resolve_seed(args.seed)
    try:
        transcript = retrieve(p, scheme, args.target, seed=seed, transport=args.transport,
                              port_base=args.port_base)
    except RetrievalError as e:
        if args.format == "json":
            emit({"error": str(e), "diagnostics": e.diagnostics}, "json")
        else:
            print(f"❌ {str(e)}")
        return EXIT_FAILED

    if args.db:
        retrieval_id = database.record_transcript(args.db, transcript)
        logging.getLogger(__name__).info(f"Recorded retrieval {retrieval_id} in {args.db}")

    ok = transcript.recovered and transcript.cost_matches
    if args.format == "json":
        emit(transcript.to_dict(), "json")
    else:
        status = "recovery OK" if transcript.recovered else "recovery FAILED"
        marker = "✓" if ok else "❌"
        print(f"{marker} {scheme} {p.label} message {args.target}: downloaded {transcript.downloaded_symbols} "
              f"symbols, rate {fraction_string(transcript.rate)}, {status}")
        print(f"📊 Traffic: {transcript.uploaded_bytes} bytes up, {transcript.downloaded_bytes} bytes down")
        if args.db:
            print(f"💾 Transcript saved to {args.db}")
    return EXIT_OK if ok else EXIT_FAILED


def _audit_target(p: SystemParams, scheme: str, protected: str, level: Optional[int]) -> AuditTarget:
    if protected == "high":
        messages, default_level = tuple(p.high_messages), p.T1
    elif protected in ("low", "all"):
        messages, default_level = tuple(p.messages), p.T2
    else:
        try:
            messages = tuple(int(k) for k in protected.split(","))
        except ValueError:
            raise ParameterError(f"--protected expects high, low or a comma list, got '{protected}'")
        default_level = p.T1 if all(k <= p.K1 for k in messages) else p.T2
    return AuditTarget(p, scheme, messages, level if level is not None else default_level)


def cmd_audit(args: argparse.Namespace) -> int:
    p = params_from_args(args)
    scheme = "broken" if args.broken else resolve_scheme(p, args.scheme)
    target = _audit_target(p, scheme, args.protected, args.level)
    first = resolve_seed(args.seed)
    seeds = [first + i for i in range(args.trials)]
    report = audit(target, seeds, plan_factory=build_broken_plan if args.broken else None)

    if args.format == "json":
        emit(report.to_dict(), "json")
    else:
        marker = "✓ PASS" if report.passed else "❌ FAIL"
        print(f"{marker} {scheme} {p.label}: protected {list(target.protected)} at level {target.level}, "
              f"{len(report.checks)} collusion checks over {len(seeds)} seeds")
        if not report.pattern_ok:
            print("  placement pattern depends on the desired message")
        for criterion, count in sorted(report.criterion_counts().items()):
            print(f"  {criterion}: {count}")
        if report.failures:
            failure = report.failures[0]
            print(f"  counterexample: seed {failure.seed}, servers {list(failure.servers)}, "
                  f"message {failure.message}")
    return EXIT_OK if report.passed else EXIT_FAILED


def _parse_values(text: str) -> List[int]:
    text = text.strip()
    try:
        if ".." in text:
            low, high = text.split("..")
            return list(range(int(low), int(high) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"Cannot parse sweep values '{text}'")


def sweep_spec_from_args(args: argparse.Namespace) -> SweepSpec:
    if args.preset:
        preset = SWEEP_PRESETS[args.preset]
        return SweepSpec(vary=preset["vary"], values=list(preset["values"]), base=dict(preset["base"]),
                         k2_offset=preset["k2_offset"])
    if not args.vary or args.values is None:
        raise ParameterError("sweep needs --preset or both --vary and --values")
    base = {flag.upper(): getattr(args, flag) for flag in PARAM_FLAGS if getattr(args, flag) is not None}
    return SweepSpec(vary=args.vary.upper(), values=_parse_values(args.values), base=base,
                     k2_offset=args.k2_offset)


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = sweep_spec_from_args(args)
    rows = sweep(spec)
    exporter = SweepExporter()

    if args.out:
        out = Path(args.out)
        if out.suffix.lower() == ".xlsx":
            exporter.export_excel(rows, out)
        else:
            exporter.export_csv(rows, out)
        print(f"💾 {len(rows)} sweep points saved to {out}")
    elif args.format == "json":
        emit(exporter.to_records(rows), "json")
    else:
        print(exporter.to_csv_text(rows), end="")
    return EXIT_OK


def cmd_history(args: argparse.Namespace) -> int:
    frame = database.get_recent_retrievals(args.db, args.limit)
    if args.format == "json":
        emit(json.loads(frame.to_json(orient="records")), "json")
    elif frame.empty:
        print("No retrievals recorded yet")
    else:
        stats = database.get_retrieval_stats(args.db)
        print(f"📊 {stats['total_retrievals']} retrievals, {stats['success_rate']:.1f}% verified")
        print(frame.to_string(index=False))
    return EXIT_OK


# --- Parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="two_level_pir",
        description=f"{APP_TITLE}: rates, codes, retrievals and privacy audits for two-level PIR",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s rates --n 3 --t1 2 --k1 2 --t2 1 --k2 3
  %(prog)s params --n 4 --t1 2 --k1 2 --t2 1 --k2 4 --check
  %(prog)s retrieve --scheme auto --n 4 --t1 2 --k1 2 --t2 1 --k2 4 --target 1 --transport tcp
  %(prog)s audit --scheme ns --n 4 --t1 2 --k1 2 --t2 1 --k2 4 --protected high
  %(prog)s sweep --preset t1-crossover --out crossover.xlsx
        """
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    rates = commands.add_parser("rates", help="Exact rates, bound, gap and coding gain")
    add_param_flags(rates)
    add_common_flags(rates, ("text", "json", "csv"))
    rates.set_defaults(handler=cmd_rates)

    params = commands.add_parser("params", help="NS coding-group parameter table")
    add_param_flags(params)
    add_common_flags(params)
    params.add_argument("--check", action="store_true", help="Also verify the group properties")
    params.set_defaults(handler=cmd_params)

    retrieve_cmd = commands.add_parser("retrieve", help="Run one retrieval against N replicas")
    add_param_flags(retrieve_cmd)
    add_common_flags(retrieve_cmd)
    retrieve_cmd.add_argument("--scheme", choices=("ns", "nb", "auto"), type=str.lower, default="auto")
    retrieve_cmd.add_argument("--target", type=int, required=True, help="Desired message k*")
    retrieve_cmd.add_argument("--seed", type=int, default=None, help="Seed (default: $PIR_SEED or 42)")
    retrieve_cmd.add_argument("--transport", choices=TRANSPORTS, default="inproc")
    retrieve_cmd.add_argument("--port-base", type=int, default=DEFAULT_PORT_BASE,
                              help="Server n listens on port-base + n (default: free ports)")
    retrieve_cmd.add_argument("--db", default=None, help="Record the transcript in this SQLite file")
    retrieve_cmd.set_defaults(handler=cmd_retrieve)

    audit_cmd = commands.add_parser("audit", help="Check query privacy against colluding servers")
    add_param_flags(audit_cmd)
    add_common_flags(audit_cmd)
    audit_cmd.add_argument("--scheme", choices=("ns", "nb", "auto"), type=str.lower, default="auto")
    audit_cmd.add_argument("--protected", default="high",
                           help="high (1:K1 at T1), low (1:K2 at T2) or a comma list (default: high)")
    audit_cmd.add_argument("--level", type=int, default=None, help="Collusion level (default: per protected set)")
    audit_cmd.add_argument("--seed", type=int, default=None)
    audit_cmd.add_argument("--trials", type=int, default=2, help="Number of consecutive seeds (default: 2)")
    audit_cmd.add_argument("--broken", action="store_true", help="Audit a deliberately leaking plan")
    audit_cmd.set_defaults(handler=cmd_audit)

    sweep_cmd = commands.add_parser("sweep", help="Rates over one varying parameter")
    add_param_flags(sweep_cmd, required=False)
    add_common_flags(sweep_cmd, ("csv", "json"))
    sweep_cmd.set_defaults(format="csv")
    sweep_cmd.add_argument("--preset", choices=sorted(SWEEP_PRESETS), default=None)
    sweep_cmd.add_argument("--vary", default=None, help="Parameter to vary: N, T1, K1, T2 or K2")
    sweep_cmd.add_argument("--values", default=None, help="Range a..b or comma list")
    sweep_cmd.add_argument("--k2-offset", type=int, default=None, help="Tie K2 to K1 + offset")
    sweep_cmd.add_argument("--out", default=None, help="Output file (.csv or .xlsx)")
    sweep_cmd.set_defaults(handler=cmd_sweep)

    history = commands.add_parser("history", help="Recently recorded retrievals")
    add_common_flags(history)
    history.add_argument("--db", default=None, help="SQLite file (default: pir_transcripts.db)")
    history.add_argument("--limit", type=int, default=10)
    history.set_defaults(handler=cmd_history)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.verbose, args.log_file)
    logger = logging.getLogger(__name__)

    try:
        return args.handler(args)
    except ParameterError as e:
        logger.error(f"Invalid parameters: {str(e)}")
        print(f"❌ {str(e)}", file=sys.stderr)
        return EXIT_USAGE
    except PirError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        print(f"❌ {str(e)}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
