"""CLI entry point for qss."""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .adversaries import STRATEGIES, StrategyParams, make_coalition
from .config import load_config, resolve, save_config
from .errors import QssError
from .harness import (
    ExperimentSpec,
    fit_escape_slope,
    format_table,
    run_experiment,
    sweep,
    verify_states,
    write_report,
)
from .messages import PartyId, check_causality
from .protocol import ProtocolConfig, Variant, run_protocol
from .qsim import DEFAULT_QUBIT_CAP, Pauli, dump_matrix
from .states import generalized_smolin, smolin4, smolin_via_circuit


def _parse_cheaters(text: str) -> tuple[PartyId, ...]:
    text = text.strip()
    if not text or text.lower() == "none":
        return ()
    return tuple(PartyId.parse(name) for name in text.split(","))


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _settings(args) -> dict:
    file_config = load_config(Path(args.config) if args.config else None)
    return resolve(vars(args), file_config)


def _protocol_config(settings: dict) -> ProtocolConfig:
    return ProtocolConfig(
        variant=settings["variant"],
        copies=int(settings["copies"]),
        check_rate=float(settings["check_rate"]),
        observable_policy=settings["observable_policy"],
        seed=int(settings["seed"]),
        qubit_cap=int(settings["qubit_cap"]),
    )


def _strategy_params(settings: dict) -> StrategyParams:
    return StrategyParams(
        basis=Pauli.parse(settings["basis"]),
        include_own=bool(settings["include_own"]),
        keep_original=bool(settings["keep_original"]),
    )


def _experiment(settings: dict) -> ExperimentSpec:
    return ExperimentSpec(
        protocol=_protocol_config(settings),
        strategy=settings["strategy"],
        members=_parse_cheaters(settings["cheaters"]),
        attacked=None if settings["attacked"] is None else int(settings["attacked"]),
        trials=int(settings["trials"]),
        master_seed=int(settings["seed"]),
        params=_strategy_params(settings),
        workers=int(settings["workers"]),
    )


def _emit(reports, settings: dict, out):
    print(format_table(reports))
    if out:
        path = Path(out)
        write_report(reports, path, settings["format"])
        print(f"\nWrote {len(reports)} row(s) to {path}")


def cmd_run(args):
    """Run one experiment and print its metrics."""
    settings = _settings(args)
    spec = _experiment(settings)
    if spec.strategy != "none" and not spec.members:
        print("Warning: a cheating strategy with no cheaters behaves honestly.", file=sys.stderr)
    if args.save_config:
        save_config(settings, Path(args.config) if args.config else None)
        print("Saved settings to config file.")
    report = run_experiment(spec)
    _emit([report], settings, args.out)
    if report.infeasible_rate == 1.0:
        print(
            f"\nStrategy '{spec.strategy}' cannot run under the {spec.protocol.variant.value} variant."
        )


def cmd_sweep(args):
    """Run one experiment per attacked-copy count."""
    settings = _settings(args)
    spec = _experiment({**settings, "attacked": 0})
    reports = sweep(spec, args.attacked)
    _emit(reports, settings, args.out)
    try:
        slope = fit_escape_slope(reports)
    except QssError as e:
        print(f"Warning: no escape-rate fit: {e}", file=sys.stderr)
        return
    print(f"\nlog(escape rate) per attacked copy: {slope:+.5f}")


def cmd_verify_states(args):
    """Run the exact state checks; exit 1 on any failure."""
    checks = verify_states()
    width = max(len(c.name) for c in checks)
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"  {mark}  {c.name:<{width}}  {c.detail}")
    failed = [c for c in checks if not c.passed]
    print(f"\n{len(checks) - len(failed)}/{len(checks)} checks passed.")
    if failed:
        sys.exit(1)


def cmd_transcript(args):
    """Run the protocol once and print or save its message log."""
    settings = _settings(args)
    config = _protocol_config(settings)
    members = _parse_cheaters(settings["cheaters"])
    attacked = settings["attacked"]
    targets = None if attacked is None else range(1, int(attacked) + 1)
    coalition = make_coalition(settings["strategy"], members, targets, _strategy_params(settings))
    outcome = run_protocol(config, coalition)
    for problem in check_causality(outcome.transcript):
        print(f"Warning: {problem}", file=sys.stderr)
    if args.out:
        path = Path(args.out)
        outcome.transcript.write(path)
        print(f"Wrote {len(outcome.transcript)} messages to {path}")
        status = "detected" if outcome.detected else "infeasible" if outcome.infeasible else "aborted" if outcome.aborted else "completed"
        print(f"Run {status}" + (f": {outcome.reason}" if outcome.reason else ""))
    else:
        sys.stdout.write(outcome.transcript.export())


def cmd_dump_state(args):
    """Print a state's density matrix in the debug dump format."""
    if args.state == "smolin4":
        state = smolin4()
    elif args.state == "circuit":
        state = smolin_via_circuit()
    else:
        state = generalized_smolin(args.n, cap=args.cap)
    sys.stdout.write(dump_matrix(state.matrix))


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="qss",
        description="Simulate quantum secret sharing with the Smolin bound-entangled state.",
    )
    parser.add_argument("--version", action="version", version=f"qss {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging to stderr")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    def add_protocol_args(p):
        p.add_argument("--variant", choices=[v.value for v in Variant])
        p.add_argument("--strategy", choices=sorted(STRATEGIES))
        p.add_argument("--cheaters", help="Comma-separated coalition, e.g. bob,charlie (or 'none')")
        p.add_argument("--copies", "-n", type=int, help="Copies of the Smolin state per run (default: 64)")
        p.add_argument("--check-rate", "-p", dest="check_rate", type=float, help="Per-position check probability (default: 0.5)")
        p.add_argument("--seed", type=int, help="Master seed (default: 0)")
        p.add_argument("--basis", choices=["X", "Y", "Z"], help="Attack basis for same-observable (default: Z)")
        p.add_argument("--observable-policy", dest="observable_policy", choices=["uniform", "X", "Y", "Z"])
        p.add_argument("--keep-original", dest="keep_original", action="store_const", const=True, help="entangle-probe keeps the intercepted qubit")
        p.add_argument("--include-own", dest="include_own", action="store_const", const=True, help="measure-resend also measures members' own qubits in the attack basis")
        p.add_argument("--qubit-cap", dest="qubit_cap", type=int, help=f"Largest joint state in qubits (default: {DEFAULT_QUBIT_CAP})")
        p.add_argument("--config", help="JSON config file (default: ~/.config/smolin-qss/config.json)")
        p.add_argument("--out", "-o", help="Write output to this file")

    def add_experiment_args(p):
        add_protocol_args(p)
        p.add_argument("--trials", "-t", type=int, help="Protocol runs per experiment (default: 10000)")
        p.add_argument("--format", choices=["csv", "json"], help="Report format for --out (default: csv)")
        p.add_argument("--workers", "-j", type=int, help="Worker processes (default: 1)")

    # ── run ─────────────────────────────────────────────────────────
    p_run = subparsers.add_parser("run", help="Run one experiment")
    add_experiment_args(p_run)
    p_run.add_argument("--attacked", "-m", type=int, help="Attacked copies per run (default: all)")
    p_run.add_argument("--save-config", dest="save_config", action="store_true", help="Save the resolved settings to the config file")
    p_run.set_defaults(func=cmd_run)

    # ── sweep ───────────────────────────────────────────────────────
    p_sweep = subparsers.add_parser("sweep", help="Run one experiment per attacked-copy count")
    add_experiment_args(p_sweep)
    p_sweep.add_argument("--attacked", "-m", type=_parse_int_list, required=True, help="e.g. 1,2,4,8,16")
    p_sweep.set_defaults(func=cmd_sweep)

    # ── verify-states ───────────────────────────────────────────────
    p_verify = subparsers.add_parser("verify-states", help="Exact state identity and PPT checks")
    p_verify.set_defaults(func=cmd_verify_states)

    # ── transcript ──────────────────────────────────────────────────
    p_transcript = subparsers.add_parser("transcript", help="Run once and print the message log")
    add_protocol_args(p_transcript)
    p_transcript.add_argument("--attacked", "-m", type=int, help="Attack copies 1..M (default: all)")
    p_transcript.set_defaults(func=cmd_transcript)

    # ── dump-state ──────────────────────────────────────────────────
    p_dump = subparsers.add_parser("dump-state", help="Print a density matrix in dump format")
    p_dump.add_argument("state", choices=["smolin4", "circuit", "generalized"])
    p_dump.add_argument("--n", type=int, default=2, help="Family index for 'generalized' (default: 2)")
    p_dump.add_argument("--cap", type=int, default=DEFAULT_QUBIT_CAP, help="Qubit cap")
    p_dump.set_defaults(func=cmd_dump_state)

    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if not args.command:
        print(
            "qss - quantum secret sharing with the Smolin state\n"
            "\n"
            "Usage: qss <command> [options]\n"
            "\n"
            "─── Experiments ────────────────────────────────────────────────\n"
            "\n"
            "  run                   Detection / accuracy metrics for one setting\n"
            "  run --variant original --strategy bell-intercept --cheaters bob\n"
            "                        The attack that breaks the one-shot protocol\n"
            "  sweep --attacked 1,2,4,8,16\n"
            "                        Detection curve over attacked copies\n"
            "\n"
            "─── Inspection ─────────────────────────────────────────────────\n"
            "\n"
            "  verify-states         Exact identity, spectrum and PPT checks\n"
            "  transcript            One run's message log (JSON lines)\n"
            "  dump-state smolin4    Density matrix in dump format\n"
            "\n"
            "Run 'qss <command> --help' for more options."
        )
        sys.exit(1)

    try:
        args.func(args)
    except QssError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
