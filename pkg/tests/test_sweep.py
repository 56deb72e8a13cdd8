"""
Tests for parameter sweeps.

Run with: pytest tests/test_sweep.py -v
"""

import json

import pytest

from runner.pipeline import EXIT_CHECK_FAILED, EXIT_OK
from runner.sweep import SWEEP_SUMMARY, cmd_sweep, expand_points, parse_grid_args
from solver.errors import ConfigurationError

BASE = """\
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


# ==================== Grid parsing ====================


def test_parse_grid_args_splits_values():
    grid = parse_grid_args(["MU=0.1, 0.5,1.0", "MOTILITY_ALPHA=0.1"])
    assert grid == {"MU": ["0.1", "0.5", "1.0"], "MOTILITY_ALPHA": ["0.1"]}


@pytest.mark.parametrize(
    "items",
    [
        [],
        ["MU"],
        ["=0.1"],
        ["NOT_A_KEY=1"],
        ["RUN_OUT=a,b"],
        ["MU=,"],
    ],
)
def test_parse_grid_args_rejects(items):
    with pytest.raises(ConfigurationError):
        parse_grid_args(items)


def test_expand_points_is_cartesian_in_key_order(tmp_path):
    points = expand_points({"MU": ["0.1", "1.0"], "MOTILITY_ALPHA": ["0.1", "0.2"]}, tmp_path)
    assert len(points) == 4
    assert points[0].overrides == (("MU", "0.1"), ("MOTILITY_ALPHA", "0.1"))
    assert points[-1].label == "mu=1.0_motility_alpha=0.2"
    assert len({p.out_dir for p in points}) == 4
    assert all(p.out_dir.startswith(str(tmp_path)) for p in points)


# ==================== Running ====================


def test_audit_sweep_reports_worst_exit_code(tmp_path):
    exit_code, outcomes = cmd_sweep(BASE, {"MU": ["0.1", "1.0"]}, tmp_path, command="audit")
    assert exit_code == EXIT_CHECK_FAILED
    assert [o.exit_code for o in outcomes] == [EXIT_CHECK_FAILED, EXIT_OK]
    summary = json.loads((tmp_path / SWEEP_SUMMARY).read_text(encoding="utf-8"))
    assert summary["command"] == "audit"
    assert summary["exit_code"] == EXIT_CHECK_FAILED
    assert [p["overrides"] for p in summary["points"]] == [{"MU": "0.1"}, {"MU": "1.0"}]
    for outcome in outcomes:
        assert (tmp_path / outcome.point.label / "audit.json").exists()


def test_verify_sweep_records_verdicts(tmp_path):
    exit_code, outcomes = cmd_sweep(BASE, {"MU": ["1.0"]}, tmp_path, command="verify")
    assert exit_code == EXIT_OK
    assert outcomes[0].verdict == "pass"
    assert (tmp_path / "mu=1.0" / "report.json").exists()


def test_invalid_point_becomes_error_outcome(tmp_path):
    exit_code, outcomes = cmd_sweep(BASE, {"MU": ["-1"]}, tmp_path, command="audit")
    assert exit_code == 2
    assert outcomes[0].error


def test_unknown_command_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        cmd_sweep(BASE, {"MU": ["1.0"]}, tmp_path, command="plot")
