"""
Tests for the command workflows and their output directories.

Run with: pytest tests/test_pipeline.py -v
"""

import csv
import json

import numpy as np
import pytest

from common.env_utils import LOCK_FILE_NAME, OutputDirectoryLock
from runner import artifacts, pipeline
from runner.config import parse_config
from runner.pipeline import (
    AUDIT_JSON,
    CLOSED_ENVELOPE_CSV,
    CONSTANTS_JSON,
    ENVELOPE_CSV,
    EXIT_CHECK_FAILED,
    EXIT_ERROR,
    EXIT_OK,
    LP_CURVE_CSV,
    cmd_audit,
    cmd_constants,
    cmd_envelope,
    cmd_simulate,
    cmd_verify,
)
from runner.plot_script import PLOT_SCRIPT
from solver import pde
from solver.errors import EllipticSolverError
from verifier.diagnostics import CheckStatus
from verifier.report import REPORT_JSON, REPORT_TEXT

SMALL = """\
GRID_EXTENTS=1.0
GRID_CELLS=21
MOTILITY_FAMILY=exponential
MOTILITY_ALPHA=0.1
MU=1.0
U0_PRESET=cosine_bump
SCHEME_T_END=0.05
SCHEME_OUTPUT_STRIDE=10
ELLIPTIC_METHOD=direct
DIAGNOSTICS_EPS=1.0
DIAGNOSTICS_SAMPLES=8
DIAGNOSTICS_AUDIT_POINTS=1000
"""


def _cfg(out_dir, **overrides):
    values = {"RUN_OUT": str(out_dir)}
    values.update(overrides)
    return parse_config(SMALL, overrides=values)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


# ==================== simulate ====================


def test_simulate_writes_trajectory_files(tmp_path):
    result = cmd_simulate(_cfg(tmp_path / "sim"))
    out = tmp_path / "sim"
    assert result.exit_code == EXIT_OK
    rows = _read_csv(out / artifacts.TIMESERIES_CSV)
    assert tuple(rows[0]) == artifacts.TIMESERIES_COLUMNS
    assert float(rows[1][0]) == 0.0
    assert float(rows[-1][0]) == pytest.approx(0.05)
    snapshot = _read_csv(out / artifacts.SNAPSHOT_DIR / "snapshot_00000.csv")
    assert snapshot[0] == ["x", "u", "v"]
    assert len(snapshot) == 22
    meta = json.loads((out / artifacts.METADATA_JSON).read_text(encoding="utf-8"))
    assert meta["status"] == "completed"
    assert meta["trajectory"]["completed"] is True
    assert (out / artifacts.CONFIG_ECHO).exists()
    assert (out / PLOT_SCRIPT).exists()
    assert not (out / LOCK_FILE_NAME).exists()


def test_simulate_is_byte_identical_across_runs(tmp_path):
    cmd_simulate(_cfg(tmp_path / "a"))
    cmd_simulate(_cfg(tmp_path / "b"))
    for name in (artifacts.TIMESERIES_CSV, artifacts.METADATA_JSON, f"{artifacts.SNAPSHOT_DIR}/index.csv"):
        first = (tmp_path / "a" / name).read_bytes()
        second = (tmp_path / "b" / name).read_bytes()
        if name == artifacts.METADATA_JSON:
            first = first.replace(str(tmp_path / "a").encode(), b"OUT")
            second = second.replace(str(tmp_path / "b").encode(), b"OUT")
        assert first == second


def test_simulate_blow_up_keeps_partial_output(tmp_path, monkeypatch):
    monkeypatch.setattr(pde, "density_rhs", lambda state, cfg: np.full(state.grid.shape, np.inf))
    result = cmd_simulate(_cfg(tmp_path / "boom"))
    assert result.exit_code == EXIT_ERROR
    assert result.error
    meta = json.loads((tmp_path / "boom" / artifacts.METADATA_JSON).read_text(encoding="utf-8"))
    assert meta["status"] == "blow_up"
    assert meta["blow_up_time"] > 0.0
    assert (tmp_path / "boom" / artifacts.TIMESERIES_CSV).exists()


def _fail_elliptic_after(monkeypatch, calls_allowed):
    real_solve = pde.solve_screened_poisson
    calls = {"n": 0}

    def failing_solve(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > calls_allowed:
            raise EllipticSolverError(1.0, 500, 1e-10)
        return real_solve(*args, **kwargs)

    monkeypatch.setattr(pde, "solve_screened_poisson", failing_solve)


@pytest.mark.parametrize("command", [cmd_simulate, cmd_envelope, cmd_verify])
def test_solver_error_keeps_partial_output(tmp_path, monkeypatch, command):
    _fail_elliptic_after(monkeypatch, 30)
    out = tmp_path / "failed"
    result = command(_cfg(out, ENVELOPE_SOURCE="measured"))
    assert result.exit_code == EXIT_ERROR
    assert "did not converge" in result.error
    meta = json.loads((out / artifacts.METADATA_JSON).read_text(encoding="utf-8"))
    assert meta["status"] == "error"
    assert meta["error_kind"] == "EllipticSolverError"
    assert meta["failed_at"] > 0.0
    assert meta["trajectory"]["completed"] is False
    assert meta["trajectory"]["steps"] == 29
    rows = _read_csv(out / artifacts.TIMESERIES_CSV)
    assert len(rows) == 31
    assert (out / artifacts.SNAPSHOT_DIR / "index.csv").exists()
    assert not (out / LOCK_FILE_NAME).exists()


def test_locked_output_directory_is_refused(tmp_path):
    out = tmp_path / "busy"
    with OutputDirectoryLock(out):
        with pytest.raises(RuntimeError):
            cmd_simulate(_cfg(out))


# ==================== audit / constants / envelope ====================


def test_audit_exit_codes(tmp_path):
    passing = cmd_audit(_cfg(tmp_path / "ok"))
    assert passing.exit_code == EXIT_OK
    assert json.loads((tmp_path / "ok" / AUDIT_JSON).read_text(encoding="utf-8"))["passed"] is True
    failing = cmd_audit(_cfg(tmp_path / "bad", MOTILITY_ALPHA="1.0"))
    assert failing.exit_code == EXIT_CHECK_FAILED


def test_constants_command(tmp_path):
    result = cmd_constants(_cfg(tmp_path / "c"))
    assert result.exit_code == EXIT_OK
    payload = json.loads((tmp_path / "c" / CONSTANTS_JSON).read_text(encoding="utf-8"))
    assert payload["samples"] == 8
    assert payload["grid"]["cells"] == [21]
    assert set(payload["c_p"]) == {"2", "4"}


@pytest.mark.parametrize("source", ["measured", "closed_bound", "zero"])
def test_envelope_command_sources(tmp_path, source):
    out = tmp_path / source
    result = cmd_envelope(_cfg(out, ENVELOPE_SOURCE=source))
    assert result.exit_code == EXIT_OK
    rows = _read_csv(out / ENVELOPE_CSV)
    assert tuple(rows[0]) == artifacts.ENVELOPE_COLUMNS
    assert float(rows[1][1]) == pytest.approx(0.5)
    assert float(rows[1][2]) == pytest.approx(1.5)
    assert float(rows[-1][0]) == pytest.approx(0.05)
    meta = json.loads((out / artifacts.METADATA_JSON).read_text(encoding="utf-8"))
    assert meta["source"] == source
    assert meta["halted"] is False


def test_envelope_csv_header_names_both_decay_bounds(tmp_path):
    out = tmp_path / "header"
    cmd_envelope(_cfg(out, ENVELOPE_SOURCE="closed_bound"))
    rows = _read_csv(out / ENVELOPE_CSV)
    assert rows[0] == ["t", "u_lo", "u_hi", "log_gap", "a_used", "bound_paper", "bound_conservative"]
    assert rows[1][5] != ""
    assert float(rows[1][6]) == pytest.approx(float(rows[1][3]))


# ==================== verify ====================


def test_verify_passes_on_small_run(tmp_path):
    out = tmp_path / "verify"
    result = cmd_verify(_cfg(out))
    assert result.exit_code == EXIT_OK, result.report.to_text()
    report = result.report
    names = [check.name for check in report.checks]
    assert names == [
        "hypothesis_audit",
        "domain_constants",
        "positivity",
        "mass",
        "lp_bound",
        "sandwich",
        "signal_sandwich",
        "gradient_bound",
        "rectangle",
        "gap_monotone",
        "envelope_growth",
        "decay",
        "convergence",
    ]
    for name in (REPORT_JSON, REPORT_TEXT, ENVELOPE_CSV, CLOSED_ENVELOPE_CSV, LP_CURVE_CSV, AUDIT_JSON):
        assert (out / name).exists()
    assert json.loads((out / REPORT_JSON).read_text(encoding="utf-8"))["verdict"] == "pass"


def test_verify_gates_checks_when_mu_is_too_small(tmp_path):
    result = cmd_verify(_cfg(tmp_path / "gated", MU="0.1"))
    assert result.exit_code == EXIT_OK, result.report.to_text()
    by_name = result.report.by_name()
    assert by_name["hypothesis_audit"].status is CheckStatus.INFORMATIONAL
    assert by_name["hypothesis_audit"].details["ungated_status"] == "fail"
    assert json.loads((tmp_path / "gated" / AUDIT_JSON).read_text(encoding="utf-8"))["passed"] is False
    for name in ("gradient_bound", "rectangle", "gap_monotone", "envelope_growth", "decay", "convergence"):
        assert by_name[name].status is CheckStatus.INFORMATIONAL


def test_verify_fails_tight_convergence(tmp_path):
    result = cmd_verify(_cfg(tmp_path / "tight", DIAGNOSTICS_EPS="1e-9"))
    assert result.exit_code == EXIT_CHECK_FAILED
    assert result.report.by_name()["convergence"].status is CheckStatus.FAIL


def test_verify_reports_failed_regularization_family(tmp_path, monkeypatch):
    def failing_family(*args, **kwargs):
        exc = EllipticSolverError(1.0, 500, 1e-10)
        exc.trajectory = "partial"
        exc.time = 0.01
        raise exc

    monkeypatch.setattr(pipeline, "run_regularization_family", failing_family)
    out = tmp_path / "reg"
    result = cmd_verify(_cfg(out, DIAGNOSTICS_REGULARIZATION_NS="10,100"))
    assert result.exit_code == EXIT_CHECK_FAILED
    record = result.report.by_name()["regularization"]
    assert record.status is CheckStatus.FAIL
    assert record.details["error_kind"] == "EllipticSolverError"
    assert json.loads((out / artifacts.METADATA_JSON).read_text(encoding="utf-8"))["trajectory"]["completed"] is True
