"""Command-line entry point: ``plns run | check | export``.

Exit codes: 0 success, 1 invalid input or failed check, 2 numerical stop
(density floor, indicator overflow, NaN, breakdown), 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .checks import gronwall_suite, inequality_suite, potential_suite, write_rows
from .config import describe_keys, load_config
from .errors import InvalidInputError
from .galerkin import STOP_COMPLETED, run
from .grid import PeriodicGrid
from .snapshot import export_csv, format_float, read_snapshot, write_snapshot

log = logging.getLogger("plns")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_INTERNAL = 0, 1, 2, 3


def _write_run_json(out_dir: Path, summary: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    start = time.perf_counter()
    out_dir = Path(args.output_dir) if args.output_dir else Path(".")
    summary = {"config_file": str(args.config), "stop_reason": None, "final_time": None, "steps": 0}
    try:
        cfg = load_config(args.config)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        summary.update(stop_reason="invalid-config", message=str(exc), exit_code=EXIT_INVALID,
                       wall_time=time.perf_counter() - start)
        _write_run_json(out_dir, summary)
        return EXIT_INVALID

    if not args.output_dir:
        out_dir = Path(cfg.output_dir)
    logging.getLogger("plns").setLevel(cfg.log_level)
    summary["config"] = dict(cfg.entries)
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshots = []
    code = EXIT_INTERNAL
    try:
        with open(out_dir / "diagnostics.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header_done = False

            def on_record(rec):
                nonlocal header_done
                if not header_done:
                    writer.writerow(rec.columns())
                    header_done = True
                writer.writerow([format_float(v) for v in rec.values()])
                fh.flush()

            def on_snapshot(k, state):
                path = out_dir / f"snapshot_{k}.plns"
                field = np.concatenate([state.rho[None], state.velocity])
                write_snapshot(path, grid, field, state.t)
                snapshots.append(path.name)

            grid = PeriodicGrid(cfg.sim.dim, cfg.sim.n)
            result = run(cfg.sim, on_record=on_record, on_snapshot=on_snapshot, keep_states=False)
        code = EXIT_OK if result.stop_reason == STOP_COMPLETED else EXIT_NUMERICAL
        summary.update(stop_reason=result.stop_reason, final_time=result.final_time, steps=result.steps,
                       message=result.message)
        if code:
            print(f"stopped: {result.stop_reason} at t={format_float(result.final_time)}: {result.message}",
                  file=sys.stderr)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
        summary.update(stop_reason="invalid-input", message=str(exc))
    except Exception as exc:  # reported through run.json and exit code 3
        log.exception("internal error")
        summary.update(stop_reason="internal-error", message=f"{type(exc).__name__}: {exc}")
        code = EXIT_INTERNAL
    summary.update(exit_code=code, snapshots=snapshots, wall_time=time.perf_counter() - start)
    _write_run_json(out_dir, summary)
    return code


def _emit(rows, output) -> int:
    if output:
        with open(output, "w", newline="") as fh:
            write_rows(rows, fh)
    else:
        write_rows(rows, sys.stdout)
    failed = [r for r in rows if not r.passed]
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.suite}/{r.check}: worst {format_float(r.worst)} "
              f"{r.relation} {format_float(r.bound)}", file=sys.stderr)
    return EXIT_INVALID if failed else EXIT_OK


def _p_range(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b got {text!r}") from None
    return lo, hi


def cmd_check(args) -> int:
    if args.suite == "potential":
        rows = potential_suite(samples=args.samples, seed=args.seed, p_range=args.p_range, dim=args.dim)
    elif args.suite == "inequalities":
        rows = inequality_suite(samples=args.samples, seed=args.seed, dim=args.dim, n=args.n)
    else:
        rows = gronwall_suite(instances=args.instances, seed=args.seed)
    return _emit(rows, args.output)


def cmd_export(args) -> int:
    snap = read_snapshot(args.snapshot)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            export_csv(snap, fh)
    else:
        export_csv(snap, sys.stdout)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit status 2 is reserved for numerical stops
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plns", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate from a key=value config file", epilog=describe_keys(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", help="overrides output_dir from the config")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="seeded verification suites (CSV report)")
    checks = p_check.add_subparsers(dest="suite", required=True)
    c_pot = checks.add_parser("potential", help="stress inequalities and Hessian checks")
    c_pot.add_argument("--samples", type=int, default=10_000)
    c_pot.add_argument("--p-range", type=_p_range, default=(1.0, 2.0), metavar="A,B")
    c_pot.add_argument("--dim", type=int, default=3, choices=(1, 2, 3))
    c_ineq = checks.add_parser("inequalities", help="functional identities and lower bounds")
    c_ineq.add_argument("--samples", type=int, default=100)
    c_ineq.add_argument("--dim", type=int, default=2, choices=(1, 2, 3))
    c_ineq.add_argument("--n", type=int, default=16)
    c_gr = checks.add_parser("gronwall", help="local Gronwall bound against RK4")
    c_gr.add_argument("--instances", type=int, default=20)
    for c in (c_pot, c_ineq, c_gr):
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--output", help="CSV path (default: stdout)")
        c.set_defaults(func=cmd_check)

    p_exp = sub.add_parser("export", help="convert a snapshot to CSV")
    p_exp.add_argument("snapshot")
    p_exp.add_argument("--output", help="CSV path (default: stdout)")
    p_exp.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    try:
        return args.func(args)
    except (InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
