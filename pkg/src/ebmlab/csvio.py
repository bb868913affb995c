"""CSV artifacts: RFC-4180 quoting, LF endings, UTF-8, header row always.

Numeric columns print with 17 significant digits so byte-identical output is
a meaningful reproducibility test.
"""

from __future__ import annotations

import csv
from pathlib import Path


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(row.get(col)) for col in header])
    return path


def read_csv(path: Path) -> tuple[list[str], list[dict]]:
    with Path(path).open("r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path} is empty; expected a header row")
        rows = [dict(zip(header, row)) for row in reader]
    return header, rows
