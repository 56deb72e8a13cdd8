"""Full-resolution acceptance runs.

These tests are opt-in; the convergence run alone integrates to t = 30 on
201 vertices.
Run with:
    RUN_ACCEPTANCE=1 python3 -m pytest tests/acceptance -q
"""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from runner.config import load_config
from runner.pipeline import EXIT_OK, cmd_verify
from runner.sweep import cmd_sweep
from solver.comparison import ASource, Envelope, integrate_envelope
from solver.motility import MotilityFunction

pytestmark = pytest.mark.acceptance

CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"


def _require_acceptance_enabled():
    if os.getenv("RUN_ACCEPTANCE") != "1":
        pytest.skip("Set RUN_ACCEPTANCE=1 to run the full-resolution acceptance runs.")


def _verify(name, out_dir, **overrides):
    values = {"RUN_OUT": str(out_dir)}
    values.update(overrides)
    cfg = load_config(CONFIG_DIR / name, overrides=values)
    return cfg, cmd_verify(cfg)


def _statuses(report):
    return {check.name: check.status.value for check in report.checks}


@pytest.fixture(scope="module")
def convergence_run(tmp_path_factory):
    _require_acceptance_enabled()
    return _verify("ac1.conf", tmp_path_factory.mktemp("ac1"))


# ==================== Convergence run ====================


def test_convergence_run_passes(convergence_run):
    _, result = convergence_run
    statuses = _statuses(result.report)
    assert result.exit_code == EXIT_OK, result.report.to_text()
    assert statuses["convergence"] == "pass"
    assert statuses["gap_monotone"] == "pass"
    residual = result.report.by_name()["convergence"].worst_residual
    assert residual <= 1e-3


def test_sandwich_holds_for_measured_envelope(convergence_run):
    _, result = convergence_run
    statuses = _statuses(result.report)
    assert statuses["sandwich"] == "pass"
    assert statuses["signal_sandwich"] == "pass"
    assert statuses["rectangle"] == "pass"


def test_closed_bound_envelope_decays(convergence_run):
    _, result = convergence_run
    assert _statuses(result.report)["decay"] == "pass"
    rows = np.genfromtxt(result.out_dir / "envelope_closed_bound.csv", delimiter=",", names=True)
    assert rows["u_hi"][-1] - rows["u_lo"][-1] < rows["u_hi"][0] - rows["u_lo"][0]


def test_positivity_and_mass(convergence_run):
    _, result = convergence_run
    statuses = _statuses(result.report)
    assert statuses["positivity"] == "pass"
    assert statuses["mass"] == "pass"
    series = np.genfromtxt(result.out_dir / "timeseries.csv", delimiter=",", names=True)
    assert series["min_u"].min() >= -1e-10
    assert series["mass"].max() <= max(series["mass"][0], 1.0) * (1.0 + 1e-6)


def test_lp_curve_stays_above_measured_integral(convergence_run):
    _, result = convergence_run
    assert _statuses(result.report)["lp_bound"] in ("pass", "informational")
    assert (result.out_dir / "lp_bound.csv").exists()


# ==================== Sweep and regularization ====================


def test_rectangle_holds_across_passing_sweep_points(tmp_path):
    _require_acceptance_enabled()
    text = (CONFIG_DIR / "sweep_base.conf").read_text(encoding="utf-8")
    grid = {"MU": ["0.5", "1", "2"], "MOTILITY_ALPHA": ["0.05", "0.1", "0.2"]}
    _, outcomes = cmd_sweep(text, grid, tmp_path, command="verify", workers=min(4, os.cpu_count() or 1))
    assert len(outcomes) == 9
    checked = 0
    for outcome in outcomes:
        report = json.loads((Path(outcome.point.out_dir) / "report.json").read_text(encoding="utf-8"))
        by_name = {c["name"]: c for c in report["checks"]}
        if by_name["hypothesis_audit"]["status"] != "pass":
            continue
        checked += 1
        assert by_name["rectangle"]["status"] == "pass", outcome.point.label
    assert checked > 0


def test_regularization_config_shares_the_convergence_setup():
    reg = load_config(CONFIG_DIR / "regularization.conf")
    ac1 = load_config(CONFIG_DIR / "ac1.conf")
    assert reg.build_grid().describe() == ac1.build_grid().describe()
    assert reg.build_grid().cells == (201,)
    assert reg.build_gamma().describe() == ac1.build_gamma().describe()
    assert reg.mu == ac1.mu
    assert np.array_equal(reg.build_u0().values, ac1.build_u0().values)
    ignored = ("t_end", "output_stride")
    reg_scheme = {k: v for k, v in reg.scheme_config().describe().items() if k not in ignored}
    ac1_scheme = {k: v for k, v in ac1.scheme_config().describe().items() if k not in ignored}
    assert reg_scheme == ac1_scheme


def test_regularized_runs_approach_limit(tmp_path):
    _require_acceptance_enabled()
    cfg, result = _verify("regularization.conf", tmp_path / "reg")
    assert cfg.build_grid().cells == (201,)
    record = result.report.by_name()["regularization"]
    assert record.status.value == "pass", record.details
    distances = [record.details["distances"][n] for n in ("10", "100", "1000")]
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] <= 1e-3


def test_two_dimensional_smoke_run(tmp_path):
    _require_acceptance_enabled()
    _, result = _verify("smoke_2d.conf", tmp_path / "2d")
    statuses = _statuses(result.report)
    assert statuses["positivity"] == "pass"
    assert statuses["sandwich"] == "pass"


def test_logistic_envelope_at_fine_step():
    _require_acceptance_enabled()
    env = integrate_envelope(Envelope.from_bounds(0.5, 2.0), ASource.zero(), MotilityFunction.constant(1.0), 1.0, 5.0, 1e-3)
    growth = np.exp(5.0)
    for start, value in ((0.5, env.lo[-1]), (2.0, env.hi[-1])):
        exact = start * growth / (1.0 - start + start * growth)
        assert value == pytest.approx(exact, rel=1e-6)
