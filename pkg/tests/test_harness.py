import json
import math

import numpy as np
import pytest

from leslie_flow.cli import main
from leslie_flow.config import ConfigError, parse_config
from leslie_flow.harness import (
    EXIT_CERTIFICATE,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    SeriesWriter,
    format_value,
    initial_state,
    read_series,
    run_experiment,
)
from leslie_flow.solver import SERIES_COLUMNS, run

DAMPED = """\
[coefficients]
mu1 = 1
mu2 = -1
mu3 = 0
mu4 = 2
mu5 = 1
mu6 = 0
xi = 0
"""


def config(body: str = "", *overrides: str, base: str = DAMPED):
    return parse_config("[grid]\nn = 16\n" + base + body, overrides)


def test_minimal_config_fills_defaults():
    cfg = parse_config("grid.n = 32\ncoefficients.mu4 = 1\n")
    assert cfg.grid.n == 32 and cfg.grid.length == 2 * math.pi
    assert cfg.experiment == "simulate" and cfg.s == 3 and cfg.seed == 0
    assert cfg.solver.dt == 1e-3 and cfg.solver.splitting == "lie" and cfg.solver.picard is None
    assert cfg.coefficients.lambda1 == 0.0 and cfg.coefficients.a == 1.5


def test_lambda_mismatch_cites_its_line():
    text = "grid.n = 32\ncoefficients.mu2 = 1\ncoefficients.mu3 = 0\ncoefficients.lambda1 = 0\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    messages = dict(info.value.violations)
    assert any("lambda1" in m for m in messages.values())
    assert 4 in messages  # the lambda1 line
    assert any("Parodi" in m for m in messages.values())


def test_isothermal_gamma_rejected_for_audit():
    with pytest.raises(ConfigError, match="gamma"):
        parse_config("coefficients.gamma = 1.0\nrun.experiment = dissipation_audit\n")


def test_all_violations_reported_with_lines():
    text = "grid.n = 31\nsolver.dt = -1\nbogus.key = 3\ngrid.n = 32\nrun.s = x\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    lines = sorted(line for line, _ in info.value.violations)
    assert lines[:1] == [1] and {2, 3, 4, 5} <= set(lines)


def test_comments_sections_and_overrides():
    cfg = parse_config("# header\n[solver]\ndt = 2e-3  # trailing\n", ["solver.dt=5e-4", "run.seed=9"])
    assert cfg.solver.dt == 5e-4 and cfg.seed == 9
    with pytest.raises(ConfigError):
        parse_config("", ["solver.nope=1"])


def test_decay_study_needs_strict_damping():
    with pytest.raises(ConfigError, match="strictly"):
        parse_config("coefficients.mu4 = 1\nrun.experiment = decay_study\n")


@pytest.mark.parametrize("value", [0.0, 1.0, -2.5e-300, math.pi, 1 / 3, 6.02214076e23, 5e-324])
def test_format_value_round_trips(value):
    assert float(format_value(value)) == value


def test_simulate_equilibrium_rows(tmp_path):
    cfg = config("[solver]\nt_end = 0.01\n")
    assert run_experiment(cfg, tmp_path) == EXIT_OK
    series = read_series(tmp_path / "series.csv")
    assert list(series) == list(SERIES_COLUMNS)
    assert len(series["t"]) == 11
    assert np.all(series["total_E"] == series["total_E"][0])
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["exit_code"] == 0 and summary["certificates"]["density_bound"]["passed"]


def test_csv_round_trip_is_bit_exact(tmp_path):
    cfg = config("[initial]\namplitude = 0.05\n[solver]\nt_end = 0.005\n")
    rows = []
    with SeriesWriter(tmp_path / "series.csv") as writer:
        run(initial_state(cfg), cfg.coefficients, cfg.solver, [writer, lambda r: rows.append(r.row())], s=cfg.s)
    series = read_series(tmp_path / "series.csv")
    for i, row in enumerate(rows):
        for col in SERIES_COLUMNS:
            assert series[col][i] == float(row[col]), col


def test_identical_config_gives_identical_bytes(tmp_path):
    cfg = config("[initial]\namplitude = 0.05\n[run]\nseed = 3\n[solver]\nt_end = 0.005\n")
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "series.csv").read_bytes() == (tmp_path / "b" / "series.csv").read_bytes()


def test_decay_study_reports_c1(tmp_path):
    cfg = config("[initial]\namplitude = 0.01\n[run]\nexperiment = decay_study\n[solver]\nt_end = 0.05\n")
    assert run_experiment(cfg, tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["monotone_E_tilde"] is True
    final = read_series(tmp_path / "series.csv")["E_tilde"]
    assert final.max() / final[0] <= summary["C1"]


def test_dissipation_audit_measures_order(tmp_path):
    cfg = config("[initial]\namplitude = 0.05\n[run]\nexperiment = dissipation_audit\ns = 1\n"
                 "[solver]\nt_end = 0.02\n")
    assert run_experiment(cfg, tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["measured_order"] >= 0.9 * summary["nominal_order"]
    assert (tmp_path / "level_0" / "series.csv").exists() and (tmp_path / "level_1" / "series.csv").exists()


def test_certificate_failure_exit_code(tmp_path):
    cfg = config("[initial]\namplitude = 0.01\n[run]\nexperiment = decay_study\ndecay_threshold = 1e-12\n"
                 "[solver]\nt_end = 0.005\n")
    assert run_experiment(cfg, tmp_path) == EXIT_CERTIFICATE
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["certificates"]["small_data"]["passed"] is False


def test_solver_error_exit_code_keeps_partial_artifacts(tmp_path):
    cfg = config("[initial]\namplitude = 0.05\n[solver]\ndt = 0.5\nt_end = 1.0\n")
    assert run_experiment(cfg, tmp_path) == EXIT_SOLVER
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["error"]["type"] == "CFLViolation"
    assert len(read_series(tmp_path / "series.csv")["t"]) == 1


def test_cli_exit_codes(tmp_path):
    good = tmp_path / "good.cfg"
    good.write_text("[grid]\nn = 16\n[solver]\nt_end = 0.003\n")
    assert main([str(good), "--output-dir", str(tmp_path / "out"), "--seed", "4"]) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["seed"] == 4
    bad = tmp_path / "bad.cfg"
    bad.write_text("grid.n = 17\n")
    assert main([str(bad), "--output-dir", str(tmp_path / "bad")]) == EXIT_CONFIG
    assert json.loads((tmp_path / "bad" / "summary.json").read_text())["exit_code"] == EXIT_CONFIG
    assert main([str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main([str(good), "--output-dir", str(tmp_path / "o2"), "--override", "solver.dt=1.0",
                 "--override", "solver.t_end=1.0"]) == EXIT_SOLVER
