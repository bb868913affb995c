"""Command-line entry point.

    ebm run --config PATH [--seed N] [--out DIR]
    ebm check [--filter NAME] [--out DIR]
    ebm list

Exit codes: 0 success, 1 check-suite assertion failure, 2 usage or config
error. EBM_OUT overrides the default output root.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checks import CHECKS, run_check_suite
from .csvio import write_csv
from .errors import ConfigError, EbmError
from .experiments import (
    EXPERIMENT_SCHEMAS,
    ESTIMATOR_NAMES,
    output_root,
    parse_config,
    run_experiment,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebm",
        description="Desk-scale energy-based-model training lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("--config", required=True, help="path to a key=value config")
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument("--out", default=None, help="override output directory")

    check_p = sub.add_parser("check", help="run the self-check suite")
    check_p.add_argument("--filter", default=None,
                         help="run only checks whose name contains this string")
    check_p.add_argument("--out", default=None, help="report output directory")

    sub.add_parser("list", help="print available experiments and estimators")
    return parser


def _cmd_run(args) -> int:
    path = Path(args.config)
    if not path.exists():
        print(f"error: config file not found: {path}", file=sys.stderr)
        return 2
    cfg = parse_config(path.read_text(encoding="utf-8"))
    cfg = cfg.with_overrides(seed=args.seed, out=args.out)
    run_dir = run_experiment(cfg, out=args.out)
    print(f"wrote {run_dir / 'run.csv'}")
    print(f"wrote {run_dir / 'summary.csv'}")
    if (run_dir / "samples.csv").exists():
        print(f"wrote {run_dir / 'samples.csv'}")
    return 0


def _cmd_check(args) -> int:
    if args.filter is not None and not any(args.filter in c.name for c in CHECKS):
        names = ", ".join(c.name for c in CHECKS)
        print(f"error: no check matches {args.filter!r}; checks: {names}",
              file=sys.stderr)
        return 2
    report, all_passed = run_check_suite(args.filter)
    out_dir = output_root(args.out) / "check"
    path = write_csv(out_dir / "report.csv",
                     ["check", "property", "measured", "tolerance", "passed"],
                     report)
    for row in report:
        if row["passed"] is None:
            status = "  --  "
        else:
            status = " pass " if row["passed"] else " FAIL "
        print(f"[{status}] {row['check']}: {row['property']} "
              f"= {row['measured']:.6g} {row['tolerance']}")
    print(f"wrote {path}")
    return 0 if all_passed else 1


def _cmd_list() -> int:
    print("experiments:")
    for name in sorted(EXPERIMENT_SCHEMAS):
        print(f"  {name}")
    print("estimators:")
    for name in ESTIMATOR_NAMES:
        print(f"  {name}")
    print("checks:")
    for check in CHECKS:
        print(f"  {check.name}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check(args)
        return _cmd_list()
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except EbmError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
