"""
core/cli.py - Command-line front end: stress, explore, validate, bench.

Exit codes: 0 pass, 1 property violation, 2 input error, 3 resource limit.
Machine output is one JSON object per line on stdout; the human summary goes
to stderr through logging.
"""

import argparse
import json
import logging
import sys
from collections.abc import Sequence

from core.bench import host_info, run_bench
from core.config import AppConfig, RunConfig
from core.deque import Fault, Reclamation
from core.errors import DequeError, LinearizabilityBoundError, UsageError
from core.explorer import Limits, Program, explore
from core.lincheck import check_conservation, format_events, is_linearizable, read_history
from core.state_oracle import read_trace, states_from_records, validate_trace
from core.stress import run_stress

log = logging.getLogger(__name__)

EXIT_PASS      = 0
EXIT_VIOLATION = 1
EXIT_INPUT     = 2
EXIT_LIMIT     = 3


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")
    sys.stdout.flush()


def _faults(names: Sequence[str] | None) -> frozenset[Fault]:
    return frozenset(Fault(n) for n in names or ())


# ── Subcommands ───────────────────────────────────────────────────────────────

def cmd_stress(args: argparse.Namespace, config: AppConfig) -> int:
    cfg = RunConfig.from_settings(
        config,
        threads  = args.threads,
        ops      = args.ops,
        capacity = args.capacity,
        seed     = args.seed,
        mode     = Reclamation(args.mode),
        faults   = _faults(args.fault),
        scan_threshold = args.scan_threshold,
        pop_ratio      = args.pop_ratio,
    )
    result = run_stress(cfg, args.history_out or config.history_dump, trace_path=args.trace_out)
    _emit({"command": "stress", **result.to_json()})
    return EXIT_PASS if result.passed else EXIT_VIOLATION


def cmd_explore(args: argparse.Namespace, config: AppConfig) -> int:
    program = Program.load(args.program)
    if args.fault or args.mode:
        program = Program(
            threads  = program.threads,
            capacity = program.capacity,
            preload  = program.preload,
            mode     = Reclamation(args.mode) if args.mode else program.mode,
            faults   = program.faults | _faults(args.fault),
        )
    limits = Limits(
        max_states     = config.max_states if args.max_states is None else args.max_states,
        max_depth      = config.max_depth if args.max_depth is None else args.max_depth,
        lincheck_bound = config.lincheck_bound,
    )
    if limits.max_states < 1 or limits.max_depth < 1:
        raise UsageError("limits must be >= 1")
    report = explore(program, limits)
    _emit({"command": "explore", **report.to_json()})
    if not report.passed:
        log.error("Violation: %s", report.violation)
        log.error("Schedule: %s", " ".join(report.counterexample or []))
        return EXIT_VIOLATION
    if not report.complete:
        log.error("Exploration stopped at a limit after %d states; result is partial", report.states)
        return EXIT_LIMIT
    for outcome, count in sorted(report.outcomes.items()):
        log.info("%6d  %s", count, outcome)
    return EXIT_PASS


def cmd_validate(args: argparse.Namespace, config: AppConfig) -> int:
    if args.history:
        return _validate_history(args, config)
    records = read_trace(args.file)
    report = validate_trace(states_from_records(records))
    _emit({"command": "validate", "records": len(records), **report.to_json()})
    if not report.passed:
        log.error("State %s: %s", report.failed_at, report.violation)
        return EXIT_VIOLATION
    log.info("Trace of %d states is valid", len(records))
    return EXIT_PASS


def _validate_history(args: argparse.Namespace, config: AppConfig) -> int:
    history = read_history(args.file)
    history.validate()
    out = {"command": "validate", "events": len(history.events), "conservation": check_conservation(history)}
    try:
        ok, witness = is_linearizable(history, config.lincheck_bound)
        out["linearizable"] = ok
        if witness:
            log.info("Witness: %s", format_events(witness))
    except LinearizabilityBoundError as exc:
        log.info("Skipping the exhaustive check: %s", exc)
        out["linearizable"] = None
    _emit(out)
    return EXIT_PASS if out["conservation"] and out["linearizable"] is not False else EXIT_VIOLATION


def cmd_bench(args: argparse.Namespace, config: AppConfig) -> int:
    cfg = RunConfig.from_settings(
        config,
        threads  = args.threads,
        ops      = args.ops,
        capacity = args.capacity,
        seed     = args.seed,
        scan_threshold = args.scan_threshold,
        pop_ratio      = args.pop_ratio,
    )
    modes = list(Reclamation) if args.mode == "both" else [Reclamation(args.mode)]
    for line in run_bench(cfg, modes):
        _emit({"command": "bench", **line.to_json()})
    _emit({"command": "bench", "host": host_info()})
    return EXIT_PASS


# ── Parser ────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cldeque", description="Chase-Lev deque workbench")
    parser.add_argument("--config", help="settings ini file (default: per-user settings)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    modes  = [m.value for m in Reclamation]
    faults = [f.value for f in Fault]

    def run_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--threads", type=int, help="total threads, owner included")
        p.add_argument("--ops", type=int, help="number of pushes")
        p.add_argument("--capacity", type=int, help="initial array capacity")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--scan-threshold", type=int)
        p.add_argument("--pop-ratio", type=float, help="chance the owner pops instead of pushing")

    p = sub.add_parser("stress", help="run the live deque with real threads")
    run_options(p)
    p.add_argument("--mode", choices=modes, default=Reclamation.KEEP_ALL.value)
    p.add_argument("--fault", action="append", choices=faults)
    p.add_argument("--history-out", help="where to dump the history on failure")
    p.add_argument("--trace-out", help="record and validate the state trace, writing it here")
    p.set_defaults(handler=cmd_stress)

    p = sub.add_parser("explore", help="explore every interleaving of a small program")
    p.add_argument("program", help="program JSON file")
    p.add_argument("--max-states", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--mode", choices=modes)
    p.add_argument("--fault", action="append", choices=faults)
    p.set_defaults(handler=cmd_explore)

    p = sub.add_parser("validate", help="check a state trace (or a history with --history)")
    p.add_argument("file")
    p.add_argument("--history", action="store_true", help="the file is a history, not a trace")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("bench", help="throughput of push/pop and steal-heavy workloads")
    run_options(p)
    p.add_argument("--mode", choices=modes + ["both"], default="both")
    p.set_defaults(handler=cmd_bench)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_INPUT

    config = AppConfig(args.config)
    level = args.log_level or config.log_level
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        return args.handler(args, config)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except DequeError as exc:
        # input problems: bad program, trace or history file, bad settings
        log.error("%s", exc)
        _emit({"command": args.command, "error": str(exc)})
        return EXIT_INPUT
