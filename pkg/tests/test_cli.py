"""End-to-end CLI tests: exit codes, determinism, config handling, artifacts."""

import json

import pytest

from heatlab.cli import (
    EXIT_ERROR,
    EXIT_INCONCLUSIVE,
    EXIT_OK,
    load_config,
    main,
)


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


# --- classify -----------------------------------------------------------------


def test_classify_supercritical_l1(capsys):
    code, rep = run_json(capsys, ["classify", "--f", "s^3", "--d", "1",
                                  "--q", "1"])
    assert code == EXIT_OK
    assert rep["verdict"]["outcome"] == "NoLocalExistence"
    assert rep["constants"]["kernel"]["d"] == 1


def test_classify_critical_l2(capsys):
    code, rep = run_json(capsys, ["classify", "--f", "s^2", "--d", "2",
                                  "--q", "2"])
    assert code == EXIT_OK and rep["verdict"]["outcome"] == "Exists"


def test_classify_builtin_log_family(capsys):
    code, rep = run_json(capsys, ["classify", "--builtin", "log_family",
                                  "--d", "2", "--beta", "1", "--q", "1"])
    assert code == EXIT_OK
    assert rep["verdict"]["outcome"] == "NoLocalExistence"


def test_classify_dead_band_exit_code(capsys):
    # exponent inside the slope dead band around the critical power
    code, rep = run_json(capsys, ["classify", "--f", "s^3.02", "--d", "2",
                                  "--q", "2"])
    assert code == EXIT_INCONCLUSIVE
    assert rep["verdict"]["outcome"] == "Inconclusive"


def test_classify_parse_error_exit(capsys):
    assert main(["classify", "--f", "s^(", "--d", "1", "--q", "1"]) \
        == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_classify_missing_param_exit():
    assert main(["classify", "--f", "s^2"]) == EXIT_ERROR


def test_classify_audit_rejection_exit():
    # beta above the admissible monotonicity range
    assert main(["classify", "--builtin", "log_family", "--d", "2",
                 "--beta", "10", "--q", "1"]) == EXIT_ERROR


# --- determinism, config, artifacts -------------------------------------------


def test_reports_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["classify", "--f", "s^2", "--d", "1", "--q", "2"]
    assert main(argv + ["--out", str(a)]) == EXIT_OK
    assert main(argv + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    # volatile details live next to the report, not inside it
    meta = json.loads((tmp_path / "a.json.meta.json").read_text())
    assert "timestamp" in meta
    assert "timestamp" not in a.read_text()


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("f = s^3\nd = 1\nq = 1  # trailing comment\n")
    code, rep = run_json(capsys, ["classify", "--config", str(cfg)])
    assert code == EXIT_OK and rep["q"] == 1.0
    code, rep = run_json(capsys, ["classify", "--config", str(cfg),
                                  "--q", "3"])
    assert rep["q"] == 3.0  # flags win over file values


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_option = 1\n")
    assert main(["classify", "--config", str(cfg), "--f", "s^2",
                 "--d", "1", "--q", "1"]) == EXIT_ERROR


def test_config_parser_accepts_dashes(tmp_path):
    cfg = tmp_path / "d.cfg"
    cfg.write_text("s-max = 1e6\n")
    assert load_config(str(cfg)) == {"s_max": "1e6"}


def test_csv_evidence_export(tmp_path):
    csv_path = tmp_path / "ev.csv"
    assert main(["classify", "--f", "s^3", "--d", "1", "--q", "1",
                 "--out", str(tmp_path / "r.json"),
                 "--csv", str(csv_path)]) == EXIT_OK
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "s,statistic" and len(lines) > 10


# --- verify-kernel -------------------------------------------------------------


def test_verify_kernel_passes(capsys):
    code, rep = run_json(capsys, ["verify-kernel", "--d", "1",
                                  "--r-grid", "0.5,1", "--t-grid", "0.25,1",
                                  "--n-points", "5"])
    assert code == EXIT_OK and rep["passed"]
    assert rep["report"]["passed"]
    assert rep["definition_check"]["min_margin"] == 0.0


def test_verify_kernel_inflated_constant_fails(capsys):
    code, rep = run_json(capsys, ["verify-kernel", "--d", "1",
                                  "--r-grid", "0.5", "--t-grid", "0.25",
                                  "--n-points", "5", "--inflate-cd", "3"])
    assert code == EXIT_ERROR and not rep["passed"]
    check = rep["definition_check"]
    assert check["min_margin"] < 0.0
    assert check["witness"]["c_d"] == pytest.approx(
        3.0 * check["witness"]["defining_value"], rel=1e-12)


# --- experiments ---------------------------------------------------------------


def test_experiment_horizon_positive(capsys):
    code, rep = run_json(capsys, ["experiment", "horizon", "--f", "s + s^2",
                                  "--d", "2", "--u0-l1", "0.5"])
    assert code == EXIT_OK
    assert rep["result"]["T"] > 0.0
    assert rep["result"]["integral_value"] <= rep["result"]["condition_bound"]


def test_experiment_iterate_certifies(tmp_path, capsys):
    csv_path = tmp_path / "trace.csv"
    code, rep = run_json(capsys, ["experiment", "iterate", "--f", "s^2",
                                  "--d", "1", "--r", "0.5",
                                  "--amplitude", "0.1", "--nodes", "129",
                                  "--n-time", "32", "--csv", str(csv_path)])
    assert code == EXIT_OK
    assert rep["supersolution_margin"] >= 0.0
    assert rep["converged"] and rep["residual"] < 1e-6
    assert csv_path.read_text().startswith("iteration,sup_delta")


def test_experiment_simulate_trajectory(tmp_path, capsys):
    csv_path = tmp_path / "traj.csv"
    code, rep = run_json(capsys, ["experiment", "simulate", "--f", "s^2",
                                  "--d", "1", "--r", "0.5",
                                  "--amplitude", "0.1", "--T", "0.01",
                                  "--nodes", "129", "--csv", str(csv_path)])
    assert code == EXIT_OK and not rep["blowup"]
    header = csv_path.read_text().splitlines()[0]
    assert header.split(",")[:3] == ["t", "l1", "l2"]


def test_experiment_lower_bound(capsys):
    code, rep = run_json(capsys, ["experiment", "lower_bound", "--f", "s^2",
                                  "--d", "1", "--r", "0.5", "--t", "0.01"])
    assert code == EXIT_OK
    assert rep["min_on_ball"] > 0.0 and rep["lq"] > 0.0


def test_experiment_blowup_trend_monotone(capsys):
    code, rep = run_json(capsys, ["experiment", "blowup_trend", "--f", "s^4",
                                  "--d", "1", "--q", "1",
                                  "--N-range", "3..6"])
    assert code == EXIT_OK
    assert rep["peak_l1_strictly_increasing"]
    peaks = [r["peak_l1"] for r in rep["rows"]]
    assert peaks == sorted(peaks)


def test_experiment_equivalence_suite_small(capsys, monkeypatch):
    monkeypatch.setenv("HEATLAB_THREADS", "2")
    code, rep = run_json(capsys, ["experiment", "equivalence_suite",
                                  "--seed", "7", "--count", "4", "--d", "2"])
    assert code in (EXIT_OK, EXIT_INCONCLUSIVE)
    assert rep["n_disagreements"] == 0
    assert len(rep["cases"]) == 4
