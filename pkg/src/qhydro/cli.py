"""Command-line entry point.

    qhydro run --scenario ho-ground-check --out results --check
    qhydro run --all --check --jobs 4
    qhydro validate --scenario my.json
    qhydro list-scenarios

Exit codes: 0 success, 1 unreadable input, 2 schema or validation error,
3 numerical failure, 4 check failure.  QHYDRO_OUTPUT_ROOT sets the output root
when --out is not given.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

from . import __version__
from . import scenario as sc_mod
from .errors import NumericalError, ValidationError

EXIT_OK = 0
EXIT_IO = 1
EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    if not args.all and not args.scenario:
        _err("run needs --scenario or --all")
        return EXIT_SCHEMA
    sources = sc_mod.bundled_names() if args.all else args.scenario
    root = sc_mod.output_root(args.out)
    worst = EXIT_OK
    for src in sources:
        t0 = time.perf_counter()
        try:
            scen = sc_mod.load(src)
            report, out_dir = sc_mod.run_scenario(scen, root, jobs=args.jobs, check=args.check)
        except FileNotFoundError as exc:
            _err(str(exc))
            return EXIT_IO
        except ValidationError as exc:
            _err(f"{src}: {exc}")
            return EXIT_SCHEMA
        except NumericalError as exc:
            _err(f"{src}: numerical failure: {exc}")
            return EXIT_NUMERICAL
        except sc_mod.CheckFailed as exc:
            for chk in exc.failures:
                print(f"FAIL {scen['name']}: {chk['metric']} = {chk['values']} (bounds: "
                      f"{ {k: chk[k] for k in ('min', 'max', 'equals') if k in chk} })")
            worst = EXIT_CHECK
            continue
        n_checks = len(report["checks"])
        print(f"ok {scen['name']}: {n_checks} check(s), {time.perf_counter() - t0:.1f}s -> {out_dir}")
        if not args.check:
            for chk in report["checks"]:
                print(f"  {'pass' if chk['passed'] else 'FAIL'} {chk['metric']} = {chk['values']}")
    return worst


def cmd_validate(args) -> int:
    if not args.scenario:
        _err("validate needs --scenario")
        return EXIT_SCHEMA
    for src in args.scenario:
        try:
            doc = sc_mod.load_document(src)
            defaulted = sc_mod.validate_document(doc)
        except FileNotFoundError as exc:
            _err(str(exc))
            return EXIT_IO
        except ValidationError as exc:
            _err(f"{src}: {exc}")
            return EXIT_SCHEMA
        print(f"ok {src}")
        if defaulted:
            print("defaults filled: " + ", ".join(defaulted))
        print(json.dumps(sc_mod.resolve(doc), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_list(args) -> int:
    for name in sc_mod.bundled_names():
        doc = sc_mod.load_document(name)
        print(f"{name:22s} {doc.get('description', '')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qhydro", description="Quantum probability fluid diagnostics")
    p.add_argument("--version", action="version", version=f"qhydro {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute scenarios and write reports")
    run.add_argument("--scenario", action="append", help="scenario file or bundled name (repeatable)")
    run.add_argument("--all", action="store_true", help="run every bundled scenario")
    run.add_argument("--out", help="output root directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    run.add_argument("--check", action="store_true", help="treat scenario checks as pass/fail gates")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="schema-check a scenario without running it")
    val.add_argument("--scenario", action="append")
    val.set_defaults(func=cmd_validate)

    ls = sub.add_parser("list-scenarios", help="list bundled scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        _err("--jobs must be >= 1")
        return EXIT_SCHEMA
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
