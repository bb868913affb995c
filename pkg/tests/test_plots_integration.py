"""End-to-end: real run artifacts through the separate plotting CLI.

The plotting component is optional; these tests skip when it is not
installed, so the rest of this suite never depends on it.
"""

import shutil
import subprocess

import pytest

from ebmlab.csvio import write_csv
from ebmlab.experiments import parse_config, run_experiment

pytestmark = pytest.mark.skipif(
    shutil.which("ebm-plots") is None,
    reason="plotting component not installed",
)


def _plot(target, out_dir):
    return subprocess.run(
        ["ebm-plots", str(target), "--out", str(out_dir)],
        capture_output=True, text=True,
    )


def test_recovery_run_renders_loss_and_trajectories(tmp_path):
    cfg = parse_config("experiment = gaussian_recovery\nseed = 7\n"
                       "estimator.name = sm\nsteps = 60\n")
    run_dir = run_experiment(cfg, out=str(tmp_path))
    proc = _plot(run_dir, tmp_path / "figs")
    assert proc.returncode == 0, proc.stderr
    names = sorted(p.name for p in (tmp_path / "figs").glob("*.png"))
    assert names == ["loss_curve.png", "param_trajectory.png"]


def test_mode_weight_run_renders_histogram_and_scale_comparison(tmp_path):
    cfg = parse_config(
        "experiment = mode_weight\nseed = 3\nsteps = 5\nplain_steps = 5\n"
        "data.n = 400\nsampler.num_draws = 150\nsampler.steps_per_level = 5\n"
        "schedule.levels = 2\nestimator.batch_size = 64\n"
    )
    run_dir = run_experiment(cfg, out=str(tmp_path))
    proc = _plot(run_dir, tmp_path / "figs")
    assert proc.returncode == 0, proc.stderr
    names = sorted(p.name for p in (tmp_path / "figs").glob("*.png"))
    assert names == ["histogram_vs_density.png", "loss_curve.png",
                     "param_trajectory.png", "scale_comparison.png"]


def test_check_report_renders(tmp_path):
    rows = [
        {"check": "de_bruijn", "property": "gap at t=0.1", "measured": 1e-9,
         "tolerance": "< 1e-3", "passed": True},
        {"check": "ksd", "property": "null z", "measured": 1.1,
         "tolerance": "< 3", "passed": True},
    ]
    report = write_csv(tmp_path / "report.csv",
                       ["check", "property", "measured", "tolerance", "passed"],
                       rows)
    proc = _plot(report, tmp_path / "figs")
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "figs" / "check_report.png").exists()
