"""Figure construction from run.csv / summary.csv / samples.csv / report.csv.

Which figures apply is decided purely from the columns present, mirroring the
CSV contract of the training package: a training run.csv carries
``step, [stage], loss, <params...>, grad_norm, <aux...>, wall_ms``. Output is
PNG at a fixed 1200x800 (12 x 8 inches at dpi 100) with no timestamps, so
identical CSVs render identical bytes.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (12.0, 8.0)
DPI = 100

PASS_COLOR = "#2e7d32"
FAIL_COLOR = "#c62828"
SKIP_COLOR = "#9e9e9e"


class PlotsError(ValueError):
    """Bad or missing input artifact."""


@dataclass(frozen=True)
class FigureSpec:
    inputs: tuple[Path, ...]
    kind: str  # loss-curve | param-trajectory | histogram-vs-density | scale-comparison
    output: Path


def _read_csv(path: Path) -> tuple[list[str], list[dict]]:
    path = Path(path)
    if not path.exists():
        raise PlotsError(f"{path}: file not found")
    with path.open("r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotsError(f"{path}: empty file, expected a CSV header row")
        rows = [dict(zip(header, row)) for row in reader]
    return header, rows


def _read_config(run_dir: Path) -> dict[str, str]:
    path = run_dir / "config.txt"
    if not path.exists():
        return {}
    entries = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        body = line.split("#", 1)[0].strip()
        if body and "=" in body:
            key, value = (part.strip() for part in body.split("=", 1))
            entries[key] = value
    return entries


def _floats(rows: list[dict], col: str) -> np.ndarray:
    return np.array([float(r[col]) for r in rows])


def _param_columns(header: list[str]) -> list[str]:
    """Columns strictly between 'loss' and 'grad_norm' are the parameters."""
    if "loss" not in header or "grad_norm" not in header:
        return []
    lo = header.index("loss") + 1
    hi = header.index("grad_norm")
    return [col for col in header[lo:hi] if col != "stage"]


def _new_figure():
    return plt.figure(figsize=FIGSIZE, dpi=DPI)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def _stage_groups(rows: list[dict]) -> list[tuple[str | None, list[dict]]]:
    if not rows or "stage" not in rows[0]:
        return [(None, rows)]
    groups: list[tuple[str | None, list[dict]]] = []
    for row in rows:
        stage = row["stage"]
        if not groups or groups[-1][0] != stage:
            groups.append((stage, []))
        groups[-1][1].append(row)
    return groups


def _draw_loss_curve(rows: list[dict], out: Path) -> Path:
    fig = _new_figure()
    ax = fig.add_subplot(111)
    for stage, group in _stage_groups(rows):
        ax.plot(_floats(group, "step"), _floats(group, "loss"),
                label=stage if stage else "loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, out)


def _draw_param_trajectory(rows: list[dict], params: list[str], out: Path) -> Path:
    fig = _new_figure()
    ax = fig.add_subplot(111)
    for col in params:
        first = True
        for stage, group in _stage_groups(rows):
            label = col if first else None
            ax.plot(_floats(group, "step"), _floats(group, col), label=label,
                    color=f"C{params.index(col) % 10}")
            first = False
    ax.set_xlabel("step")
    ax.set_ylabel("parameter value")
    ax.set_title("parameter trajectories")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, out)


def _analytic_density(config: dict[str, str]):
    """Grid density implied by the run's data spec, when recognizable."""
    try:
        if config.get("experiment") == "mode_weight":
            pi = float(config["data.pi"])
            mp = float(config["data.mean_pos"])
            mn = float(config["data.mean_neg"])
            sd = float(config["data.component_std"])
            lo = min(mn, mp) - 4 * sd - 1
            hi = max(mn, mp) + 4 * sd + 1
            xs = np.linspace(lo, hi, 2001)

            def normal(m):
                return np.exp(-0.5 * ((xs - m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

            return xs, pi * normal(mp) + (1 - pi) * normal(mn)
        if "data.mean" in config and "data.std" in config:
            m = float(config["data.mean"])
            sd = float(config["data.std"])
            xs = np.linspace(m - 5 * sd, m + 5 * sd, 2001)
            pdf = np.exp(-0.5 * ((xs - m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
            return xs, pdf
    except (KeyError, ValueError):
        return None
    return None


def _draw_histogram_vs_density(samples_path: Path, config: dict[str, str],
                               out: Path) -> Path:
    header, rows = _read_csv(samples_path)
    fig = _new_figure()
    overlay = _analytic_density(config)
    for i, col in enumerate(header):
        ax = fig.add_subplot(1, len(header), i + 1)
        values = np.array([float(r[col]) for r in rows if r[col] != ""])
        ax.hist(values, bins=60, density=True, alpha=0.7, color="C0")
        if overlay is not None:
            xs, pdf = overlay
            ax.plot(xs, pdf, color="C3", lw=1.5, label="data density")
            ax.legend(fontsize=7)
        ax.set_title(col, fontsize=9)
    fig.suptitle("sampler draws vs data density")
    return _save(fig, out)


def _draw_scale_comparison(summary_rows: list[dict], config: dict[str, str],
                           out: Path) -> Path:
    rows = [r for r in summary_rows if r["metric"].startswith("basin_fraction")]
    fig = _new_figure()
    ax = fig.add_subplot(111)
    labels = [r["metric"].replace("basin_fraction_", "") for r in rows]
    values = [float(r["value"]) for r in rows]
    colors = [PASS_COLOR if r["passed"] == "true"
              else FAIL_COLOR if r["passed"] == "false" else SKIP_COLOR
              for r in rows]
    ax.bar(labels, values, color=colors)
    if "data.pi" in config:
        ax.axhline(float(config["data.pi"]), color="k", ls="--", lw=1,
                   label="true weight")
        ax.legend(fontsize=8)
    ax.set_ylabel("positive-basin fraction")
    ax.set_title("mode-weight estimates per method")
    return _save(fig, out)


def plan_run_figures(run_dir: Path, out_dir: Path) -> list[FigureSpec]:
    """Decide the applicable figure set for a run directory from its columns."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    run_csv = run_dir / "run.csv"
    header, rows = _read_csv(run_csv)
    if not header or header == [""]:
        raise PlotsError(f"{run_csv}: garbled header; expected named columns")
    specs = []
    if "step" in header and "loss" in header:
        specs.append(FigureSpec((run_csv,), "loss-curve", out_dir / "loss_curve.png"))
        if _param_columns(header):
            specs.append(FigureSpec((run_csv,), "param-trajectory",
                                    out_dir / "param_trajectory.png"))
    samples_csv = run_dir / "samples.csv"
    if samples_csv.exists():
        specs.append(FigureSpec((samples_csv,), "histogram-vs-density",
                                out_dir / "histogram_vs_density.png"))
    summary_csv = run_dir / "summary.csv"
    if summary_csv.exists():
        _, summary_rows = _read_csv(summary_csv)
        if any(r["metric"].startswith("basin_fraction") for r in summary_rows):
            specs.append(FigureSpec((summary_csv,), "scale-comparison",
                                    out_dir / "scale_comparison.png"))
    return specs


def render_run(run_dir, out_dir) -> list[Path]:
    """Render every applicable figure for a run directory; idempotent.

    A run.csv with a header but no data rows yields zero images and a
    warning rather than an error.
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    header, rows = _read_csv(run_dir / "run.csv")
    if {"step", "loss"} - set(header):
        raise PlotsError(
            f"{run_dir / 'run.csv'}: expected columns 'step' and 'loss', "
            f"got {header}"
        )
    if not rows:
        warnings.warn(f"{run_dir / 'run.csv'} has a header but no rows; "
                      "nothing to draw")
        return []
    config = _read_config(run_dir)
    outputs = []
    for spec in plan_run_figures(run_dir, out_dir):
        if spec.kind == "loss-curve":
            outputs.append(_draw_loss_curve(rows, spec.output))
        elif spec.kind == "param-trajectory":
            outputs.append(_draw_param_trajectory(
                rows, _param_columns(header), spec.output))
        elif spec.kind == "histogram-vs-density":
            outputs.append(_draw_histogram_vs_density(spec.inputs[0], config,
                                                      spec.output))
        elif spec.kind == "scale-comparison":
            _, summary_rows = _read_csv(spec.inputs[0])
            outputs.append(_draw_scale_comparison(summary_rows, config,
                                                  spec.output))
    return outputs


def report_cell_colors(rows: list[dict]) -> list[str]:
    """One color per report row: green pass, red fail, gray recorded-only."""
    colors = []
    for row in rows:
        if row.get("passed") == "true":
            colors.append(PASS_COLOR)
        elif row.get("passed") == "false":
            colors.append(FAIL_COLOR)
        else:
            colors.append(SKIP_COLOR)
    return colors


def render_check_report(report_csv, out) -> Path:
    """Pass/fail matrix for a check-suite report: one cell per row, red iff
    the row failed."""
    header, rows = _read_csv(report_csv)
    required = {"property", "measured", "passed"}
    if required - set(header):
        raise PlotsError(
            f"{report_csv}: expected columns {sorted(required)}, got {header}"
        )
    colors = report_cell_colors(rows)
    fig = _new_figure()
    ax = fig.add_subplot(111)
    n = len(rows)
    for i, (row, color) in enumerate(zip(rows, colors)):
        y = n - 1 - i
        ax.barh(y, 1.0, color=color, edgecolor="white", height=0.9)
        ax.text(0.02, y, f"{row['property']} = {row['measured']}",
                va="center", fontsize=7)
    ax.set_xlim(0, 1)
    ax.set_ylim(-0.5, max(n - 0.5, 0.5))
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(f"check report: {n} properties")
    out = Path(out)
    if out.suffix != ".png":
        out = out / "check_report.png"
    return _save(fig, out)
