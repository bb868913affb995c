import csv
from pathlib import Path

import pytest

from ebmplots.cli import main as cli_main
from ebmplots.figures import (
    PlotsError,
    plan_run_figures,
    render_check_report,
    render_run,
    report_cell_colors,
    FAIL_COLOR,
)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


@pytest.fixture
def recovery_run(tmp_path):
    run_dir = tmp_path / "gaussian_recovery-seed7"
    header = ["step", "loss", "mu", "chol_diag", "grad_norm",
              "per_sample_loss_var", "wall_ms"]
    rows = [[i, 2.0 / (i + 1), 0.1 * i, -0.01 * i, 0.5, 1.0, 0]
            for i in range(0, 100, 10)]
    _write_csv(run_dir / "run.csv", header, rows)
    (run_dir / "config.txt").write_text(
        "data.mean = 1\ndata.std = 2\nexperiment = gaussian_recovery\nseed = 7\n")
    return run_dir


@pytest.fixture
def mode_weight_run(tmp_path):
    run_dir = tmp_path / "mode_weight-seed5"
    header = ["step", "stage", "loss", "weight_0", "weight_1", "mu_0", "mu_1",
              "log_sigma_0", "log_sigma_1", "grad_norm", "per_sample_loss_var",
              "wall_ms"]
    rows = []
    for stage in ("sm", "dsm_sigma=2"):
        rows += [[i, stage, 1.0 / (i + 1), 0, 0, -2, 2, 0, 0, 0.1, 1.0, 0]
                 for i in range(0, 30, 10)]
    _write_csv(run_dir / "run.csv", header, rows)
    _write_csv(run_dir / "samples.csv", ["ground_truth", "multiscale", "plain_sm"],
               [[4.0 + 0.01 * i, 4.0 - 0.01 * i, -4.0 + 0.01 * i] for i in range(50)])
    _write_csv(run_dir / "summary.csv", ["metric", "value", "criterion", "passed"],
               [["basin_fraction_ground_truth", "0.7", "|v-0.7|<0.015", "true"],
                ["basin_fraction_multiscale", "0.68", "|v-0.7|<0.1", "true"],
                ["basin_fraction_plain_sm", "0.5", "", ""]])
    (run_dir / "config.txt").write_text(
        "experiment = mode_weight\nseed = 5\ndata.pi = 0.7\n"
        "data.mean_pos = 4\ndata.mean_neg = -4\ndata.component_std = 0.1\n")
    return run_dir


def test_recovery_run_yields_loss_and_trajectory(recovery_run, tmp_path):
    out = tmp_path / "figs"
    images = render_run(recovery_run, out)
    assert [p.name for p in images] == ["loss_curve.png", "param_trajectory.png"]
    assert all(p.exists() for p in images)


def test_header_only_run_yields_zero_images_with_warning(tmp_path):
    run_dir = tmp_path / "empty"
    _write_csv(run_dir / "run.csv",
               ["step", "loss", "mu", "grad_norm", "wall_ms"], [])
    with pytest.warns(UserWarning, match="no rows"):
        images = render_run(run_dir, tmp_path / "figs")
    assert images == []


def test_mode_weight_run_yields_full_figure_set(mode_weight_run, tmp_path):
    images = render_run(mode_weight_run, tmp_path / "figs")
    names = sorted(p.name for p in images)
    assert names == ["histogram_vs_density.png", "loss_curve.png",
                     "param_trajectory.png", "scale_comparison.png"]


def test_plan_is_column_driven(recovery_run, tmp_path):
    specs = plan_run_figures(recovery_run, tmp_path)
    assert [s.kind for s in specs] == ["loss-curve", "param-trajectory"]


def test_missing_columns_error_names_file(tmp_path):
    run_dir = tmp_path / "bad"
    _write_csv(run_dir / "run.csv", ["epoch", "objective"], [[1, 2.0]])
    with pytest.raises(PlotsError, match="run.csv.*step"):
        render_run(run_dir, tmp_path / "figs")


def test_empty_file_is_an_error(tmp_path):
    run_dir = tmp_path / "none"
    run_dir.mkdir()
    (run_dir / "run.csv").write_text("")
    with pytest.raises(PlotsError, match="header"):
        render_run(run_dir, tmp_path / "figs")


def test_rendering_is_deterministic(recovery_run, tmp_path):
    a = render_run(recovery_run, tmp_path / "a")
    b = render_run(recovery_run, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_rerender_overwrites(recovery_run, tmp_path):
    out = tmp_path / "figs"
    first = render_run(recovery_run, out)
    second = render_run(recovery_run, out)
    assert first == second


# -- check report -------------------------------------------------------------


def _report_rows(n_fail: int, n_pass: int = 3, n_skip: int = 1):
    rows = [["gradient_oracles", f"prop_pass_{i}", "1e-7", "< 1e-5", "true"]
            for i in range(n_pass)]
    rows += [["fisher", f"prop_fail_{i}", "9.9", "< 3", "false"]
             for i in range(n_fail)]
    rows += [["cv", f"prop_skip_{i}", "0.5", "", ""] for i in range(n_skip)]
    return rows


def test_all_pass_report_has_zero_red_cells(tmp_path):
    path = tmp_path / "report.csv"
    _write_csv(path, ["check", "property", "measured", "tolerance", "passed"],
               _report_rows(n_fail=0))
    image = render_check_report(path, tmp_path / "figs")
    assert image.exists()
    import csv as _csv
    with path.open() as f:
        rows = list(_csv.DictReader(f))
    assert report_cell_colors(rows).count(FAIL_COLOR) == 0


def test_one_injected_fail_row_gives_one_red_cell(tmp_path):
    path = tmp_path / "report.csv"
    _write_csv(path, ["check", "property", "measured", "tolerance", "passed"],
               _report_rows(n_fail=1))
    render_check_report(path, tmp_path / "figs")
    import csv as _csv
    with path.open() as f:
        rows = list(_csv.DictReader(f))
    colors = report_cell_colors(rows)
    assert colors.count(FAIL_COLOR) == 1
    assert len(colors) == len(rows)


def test_report_requires_expected_columns(tmp_path):
    path = tmp_path / "report.csv"
    _write_csv(path, ["name", "value"], [["a", "1"]])
    with pytest.raises(PlotsError, match="report.csv.*passed"):
        render_check_report(path, tmp_path / "figs")


# -- CLI --------------------------------------------------------------------------


def test_cli_run_dir(recovery_run, tmp_path, capsys):
    assert cli_main([str(recovery_run), "--out", str(tmp_path / "figs")]) == 0
    out = capsys.readouterr().out
    assert "loss_curve.png" in out


def test_cli_report(tmp_path):
    path = tmp_path / "report.csv"
    _write_csv(path, ["check", "property", "measured", "tolerance", "passed"],
               _report_rows(n_fail=0))
    assert cli_main([str(path), "--out", str(tmp_path / "figs")]) == 0
    assert (tmp_path / "figs" / "check_report.png").exists()


def test_cli_header_only_warns_but_exits_zero(tmp_path, capsys):
    run_dir = tmp_path / "empty"
    _write_csv(run_dir / "run.csv", ["step", "loss", "grad_norm", "wall_ms"], [])
    assert cli_main([str(run_dir), "--out", str(tmp_path / "figs")]) == 0
    assert "warning" in capsys.readouterr().err


def test_cli_bad_target_exits_nonzero(tmp_path, capsys):
    missing = tmp_path / "ghost"
    assert cli_main([str(missing), "--out", str(tmp_path / "figs")]) in (1, 2)
