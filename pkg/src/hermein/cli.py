"""Command-line driver: ``hermein run <config>``, ``hermein list``, ``hermein check``.

Exit codes: 0 success, 1 unreadable or malformed config, 2 invariant
violation, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from contextlib import nullcontext

import numpy as np

from .config import ConfigError, ConfigInvariantError, load_config
from .errors import HermeinError, InvalidArgumentError, UnsupportedBundleError
from .report import emit_report

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_NUMERIC = 0, 1, 2, 3


def _thread_limit():
    raw = os.environ.get("HERMEIN_THREADS")
    if not raw:
        return nullcontext()
    try:
        count = int(raw)
    except ValueError:
        print(f"hermein: ignoring non-integer HERMEIN_THREADS={raw!r}", file=sys.stderr)
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, count))


def _failing_operation(exc: BaseException) -> str:
    """Name of the innermost library function on the traceback."""
    name = "unknown"
    tb = exc.__traceback__
    pkg = os.path.dirname(__file__)
    while tb is not None:
        if os.path.dirname(tb.tb_frame.f_code.co_filename) == pkg:
            name = tb.tb_frame.f_code.co_name
        tb = tb.tb_next
    return name


def _cmd_list(args) -> int:
    from .experiments import CRITERION_OF, EXPERIMENTS

    for name in EXPERIMENTS:
        print(f"{name}\tcriterion {CRITERION_OF[name]}")
    return EXIT_OK


def _cmd_run(args) -> int:
    from .experiments import run_experiment

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"hermein: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigInvariantError as exc:
        print(f"hermein: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    try:
        rows = run_experiment(cfg)
    except (UnsupportedBundleError, InvalidArgumentError) as exc:
        print(f"hermein: invariant violated in {cfg.experiment}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (HermeinError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        op = _failing_operation(exc)
        print(f"hermein: numeric failure in {op} ({cfg.experiment}): {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    path = args.output or cfg.output_path
    fmt = args.format or cfg.output_format
    try:
        text = emit_report(rows, fmt, path, cfg.experiment)
    except OSError as exc:
        print(f"hermein: cannot write report: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if path is None:
        sys.stdout.write(text)

    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"hermein: invariant violated: {r.quantity} (n={r.n}) value={r.value!r} tolerance={r.tolerance!r}", file=sys.stderr)
    return EXIT_INVARIANT if failed else EXIT_OK


def _cmd_check(args) -> int:
    from .experiments import CRITERIA, run_criterion

    ok = True
    for c in CRITERIA:
        res = run_criterion(c)
        print(res.line(), flush=True)
        ok &= res.passed
    print("all criteria passed" if ok else "some criteria failed")
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hermein", description="Balanced metrics and Hermite-Einstein recovery on split bundles over P^1.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a TOML config")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="report path (overrides output.path; default stdout)")
    run.add_argument("-f", "--format", choices=("csv", "json"), help="overrides output.format")
    run.set_defaults(func=_cmd_run)

    lst = sub.add_parser("list", help="print experiment names")
    lst.set_defaults(func=_cmd_list)

    chk = sub.add_parser("check", help="run the acceptance suite; exit 0 iff every criterion passes")
    chk.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with _thread_limit():
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
