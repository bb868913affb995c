import os

import numpy as np
import pytest

from ebmlab.cli import main as cli_main
from ebmlab.csvio import read_csv
from ebmlab.energy import GaussianDensity
from ebmlab.errors import ConfigError
from ebmlab.experiments import (
    de_bruijn_rows,
    parse_config,
    run_experiment,
    serialize_config,
)

MINIMAL = "experiment = gaussian_recovery\nseed = 7\nestimator.name = sm\n"


# -- config parsing ---------------------------------------------------------------


def test_empty_config_reports_missing_keys():
    with pytest.raises(ConfigError, match="missing required keys"):
        parse_config("")


def test_minimal_config_round_trips():
    cfg = parse_config(MINIMAL)
    assert cfg.experiment == "gaussian_recovery"
    assert cfg.seed == 7
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_comments_and_blank_lines_ignored():
    text = "# a comment\n\nexperiment = de_bruijn # trailing\nseed = 1\n"
    cfg = parse_config(text)
    assert cfg.experiment == "de_bruijn"


def test_duplicate_key_rejected_with_line():
    text = MINIMAL + "seed = 8\n"
    with pytest.raises(ConfigError, match="line 4.*duplicate"):
        parse_config(text)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'data.variance'"):
        parse_config(MINIMAL + "data.variance = 4\n")


def test_type_mismatch_names_line():
    with pytest.raises(ConfigError, match="line 2.*expects type int"):
        parse_config("experiment = gaussian_recovery\nseed = soon\n"
                     "estimator.name = sm\n")


def test_negative_sigma_names_key():
    with pytest.raises(ConfigError, match="estimator.sigma.*positive"):
        parse_config(MINIMAL + "estimator.sigma = -1\n")


def test_unknown_experiment_lists_available():
    with pytest.raises(ConfigError, match="available experiments.*de_bruijn"):
        parse_config("experiment = annealing_zoo\nseed = 1\n")


def test_family_mismatch_fails_before_compute():
    with pytest.raises(ConfigError, match="family"):
        parse_config(MINIMAL + "family.dim = 2\n")


def test_zero_epsilon_rejected_for_cd_sm():
    with pytest.raises(ConfigError, match="positive"):
        parse_config("experiment = cd_sm_connection\nseed = 1\n"
                     "epsilons = 0.3,0\n")


def test_nonpositive_t_rejected_for_de_bruijn():
    with pytest.raises(ConfigError, match="positive"):
        parse_config("experiment = de_bruijn\nseed = 1\nt_values = 0.5,-0.1\n")


def test_zero_shift_rejected_for_taylor_experiment():
    with pytest.raises(ConfigError, match="positive"):
        parse_config("experiment = ssm_nce_equiv\nseed = 1\nv_scales = 0\n")


# -- de Bruijn helper --------------------------------------------------------------


def test_de_bruijn_identical_distributions_give_zero():
    p = GaussianDensity([0.3], [1.2])
    rows = de_bruijn_rows([0.5], 1e-4, p, p)
    assert rows[0]["neg_fisher"] == 0.0
    assert abs(rows[0]["kl_time_derivative"]) < 1e-12


def test_de_bruijn_gap_is_second_order_in_h():
    data = GaussianDensity([0.0], [1.0])
    model = GaussianDensity([0.8], [2.25])
    coarse = de_bruijn_rows([0.5], 1e-2, data, model)[0]["rel_gap"]
    fine = de_bruijn_rows([0.5], 1e-3, data, model)[0]["rel_gap"]
    assert coarse / fine == pytest.approx(100.0, rel=0.05)


# -- run_experiment ------------------------------------------------------------------


def test_run_experiment_writes_byte_identical_csvs(tmp_path):
    cfg = parse_config(MINIMAL + "steps = 120\n")
    dir_a = run_experiment(cfg, out=str(tmp_path / "a"))
    dir_b = run_experiment(cfg, out=str(tmp_path / "b"))
    for name in ("run.csv", "summary.csv", "config.txt"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_run_csv_layout_and_cadence(tmp_path):
    cfg = parse_config(MINIMAL + "steps = 95\n")
    run_dir = run_experiment(cfg, out=str(tmp_path))
    header, rows = read_csv(run_dir / "run.csv")
    assert header[:2] == ["step", "loss"]
    assert "mu" in header and "chol_diag" in header
    assert header[-1] == "wall_ms"
    steps = [int(r["step"]) for r in rows]
    assert steps == list(range(0, 95, 10)) + [94]


def test_recovery_summary_flags(tmp_path):
    cfg = parse_config(MINIMAL)
    run_dir = run_experiment(cfg, out=str(tmp_path))
    _, rows = read_csv(run_dir / "summary.csv")
    flags = {r["metric"]: r for r in rows}
    assert flags["mu_hat"]["passed"] == "true"
    assert abs(float(flags["mu_hat"]["value"]) - 1.0) < 0.05
    assert flags["sigma_hat"]["passed"] == "true"


def test_mode_weight_smoke_writes_samples(tmp_path):
    text = (
        "experiment = mode_weight\nseed = 3\nsteps = 5\nplain_steps = 5\n"
        "data.n = 500\nsampler.num_draws = 200\nsampler.steps_per_level = 5\n"
        "schedule.levels = 2\nestimator.batch_size = 128\n"
    )
    run_dir = run_experiment(parse_config(text), out=str(tmp_path))
    header, rows = read_csv(run_dir / "samples.csv")
    assert sorted(header) == ["ground_truth", "multiscale", "plain_sm"]
    assert len(rows) == 200
    header, rows = read_csv(run_dir / "run.csv")
    stages = {r["stage"] for r in rows}
    assert "sm" in stages and any(s.startswith("dsm_sigma=") for s in stages)


def test_ebm_out_env_sets_default_root(tmp_path, monkeypatch):
    monkeypatch.setenv("EBM_OUT", str(tmp_path / "from_env"))
    cfg = parse_config("experiment = de_bruijn\nseed = 1\n")
    run_dir = run_experiment(cfg)
    assert run_dir.parent == tmp_path / "from_env"


def test_wall_ms_zero_by_default_and_live_with_timing(tmp_path, monkeypatch):
    monkeypatch.delenv("EBM_TIMING", raising=False)
    cfg = parse_config(MINIMAL + "steps = 30\n")
    run_dir = run_experiment(cfg, out=str(tmp_path / "plain"))
    _, rows = read_csv(run_dir / "run.csv")
    assert all(r["wall_ms"] == "0" for r in rows)
    monkeypatch.setenv("EBM_TIMING", "1")
    run_dir = run_experiment(cfg, out=str(tmp_path / "timed"))
    _, rows = read_csv(run_dir / "run.csv")
    assert int(rows[-1]["wall_ms"]) >= 0


# -- CLI -------------------------------------------------------------------------------


def test_cli_list_exits_zero(capsys):
    assert cli_main(["list"]) == 0
    out = capsys.readouterr().out
    assert "gaussian_recovery" in out and "mode_weight" in out


def test_cli_run_and_outputs(tmp_path, capsys):
    config = tmp_path / "cfg.txt"
    config.write_text("experiment = de_bruijn\nseed = 5\n")
    code = cli_main(["run", "--config", str(config), "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o" / "de_bruijn-seed5" / "run.csv").exists()


def test_cli_seed_override(tmp_path):
    config = tmp_path / "cfg.txt"
    config.write_text("experiment = de_bruijn\nseed = 5\n")
    cli_main(["run", "--config", str(config), "--seed", "9",
              "--out", str(tmp_path / "o")])
    assert (tmp_path / "o" / "de_bruijn-seed9" / "run.csv").exists()


def test_cli_bad_config_exits_two(tmp_path, capsys):
    config = tmp_path / "cfg.txt"
    config.write_text("experiment = gaussian_recovery\nseed = 1\n"
                      "estimator.name = sm\nestimator.sigma = -2\n")
    assert cli_main(["run", "--config", str(config)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_missing_config_file_exits_two(tmp_path, capsys):
    assert cli_main(["run", "--config", str(tmp_path / "nope.txt")]) == 2


def test_cli_check_filtered(tmp_path, capsys):
    code = cli_main(["check", "--filter", "de_bruijn", "--out", str(tmp_path)])
    assert code == 0
    header, rows = read_csv(tmp_path / "check" / "report.csv")
    assert header == ["check", "property", "measured", "tolerance", "passed"]
    assert len(rows) == 3
    assert all(r["passed"] == "true" for r in rows)


def test_cli_check_unknown_filter_exits_two(capsys):
    assert cli_main(["check", "--filter", "warp_drive"]) == 2


def test_recovery_with_persistent_buffer_smoke(tmp_path):
    text = MINIMAL.replace("estimator.name = sm", "estimator.name = cd")
    text += ("steps = 40\nestimator.init = buffer\nestimator.k_steps = 10\n"
             "estimator.batch_size = 64\ndata.n = 500\n")
    run_dir = run_experiment(parse_config(text), out=str(tmp_path))
    _, rows = read_csv(run_dir / "run.csv")
    assert len(rows) > 0


def test_recovery_cd_with_adjustment_records_accept_rate(tmp_path):
    text = MINIMAL.replace("estimator.name = sm", "estimator.name = cd")
    text += ("steps = 20\nestimator.adjust = true\nestimator.k_steps = 10\n"
             "estimator.batch_size = 64\ndata.n = 500\n")
    run_dir = run_experiment(parse_config(text), out=str(tmp_path))
    header, rows = read_csv(run_dir / "run.csv")
    assert "mala_accept_rate" in header
    assert 0.0 < float(rows[-1]["mala_accept_rate"]) <= 1.0
