"""CLI: ebm-plots <run_dir | report.csv> --out DIR"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .figures import PlotsError, render_check_report, render_run


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ebm-plots",
        description="Render figures from ebmlab CSV run artifacts",
    )
    parser.add_argument("target",
                        help="a run directory (containing run.csv) or a report.csv")
    parser.add_argument("--out", required=True, help="output directory for PNGs")
    args = parser.parse_args(argv)

    target = Path(args.target)
    try:
        if target.is_dir():
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                images = render_run(target, args.out)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            for image in images:
                print(f"wrote {image}")
            if not images:
                print("no figures produced", file=sys.stderr)
            return 0
        if target.name.endswith(".csv"):
            image = render_check_report(target, Path(args.out))
            print(f"wrote {image}")
            return 0
        print(f"error: {target} is neither a run directory nor a report.csv",
              file=sys.stderr)
        return 2
    except PlotsError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
