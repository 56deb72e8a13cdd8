"""
Command workflows: audit, constants, simulate, envelope, verify.

Each command owns its output directory through OutputDirectoryLock, echoes
the resolved configuration, and returns a CommandResult whose exit_code
follows the CLI contract (0 pass, 1 gated check failed, 2 runtime error).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from common.env_utils import OutputDirectoryLock
from common.logging_utils import log_event
from runner import artifacts
from runner.config import RunConfig, render_config
from runner.plot_script import write_plot_script
from solver.comparison import ASource, Envelope, EnvelopeTrajectory, decay_bound, integrate_envelope
from solver.elliptic import DomainConstants, estimate_domain_constants
from solver.errors import BlowUpError, HypothesisError, LabError
from solver.motility import HypothesisAudit, audit_hypotheses
from solver.pde import Trajectory, run, run_regularization_family
from verifier import diagnostics as dx
from verifier.diagnostics import CheckRecord, CheckStatus, HypothesisGate
from verifier.lp_bound import integrate_lp_bound
from verifier.report import DiagnosticsReport, write_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

ENVELOPE_CSV = "envelope.csv"
CLOSED_ENVELOPE_CSV = "envelope_closed_bound.csv"
LP_CURVE_CSV = "lp_bound.csv"
AUDIT_JSON = "audit.json"
CONSTANTS_JSON = "constants.json"


@dataclass
class CommandResult:
    command: str
    out_dir: Path
    exit_code: int = EXIT_OK
    report: Optional[DiagnosticsReport] = None
    files: List[Path] = field(default_factory=list)
    error: Optional[str] = None


def _out_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out)


def _echo_config(cfg: RunConfig, out_dir: Path) -> Path:
    path = out_dir / artifacts.CONFIG_ECHO
    path.write_text(render_config(cfg), encoding="utf-8")
    return path


def _metadata(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "config": render_config(cfg), "seed": cfg.seed, **extra}


def _audit(cfg: RunConfig) -> HypothesisAudit:
    d = cfg.diagnostics
    return audit_hypotheses(cfg.build_gamma(), cfg.mu, s_max=d.audit_s_max, n_points=d.audit_points)


def _constants(cfg: RunConfig) -> DomainConstants:
    p_list = [cfg.scheme.lp_power]
    return estimate_domain_constants(
        cfg.build_grid(),
        cfg.diagnostics.samples,
        p_list,
        seed=cfg.seed,
        tol=cfg.elliptic.tol,
        method=cfg.elliptic.method,
    )


def _simulate(cfg: RunConfig) -> Trajectory:
    return run(cfg.build_u0(), cfg.build_gamma(), cfg.mu, cfg.scheme_config())


def _measured_envelope(cfg: RunConfig, traj: Trajectory) -> EnvelopeTrajectory:
    lo, hi = cfg.envelope_start(traj.initial.u)
    source = ASource.measured(traj.series["t"], traj.series["a_t"])
    t_end = min(cfg.scheme.t_end, float(traj.series["t"][-1]))
    return integrate_envelope(
        Envelope.from_bounds(lo, hi), source, traj.gamma, traj.mu, t_end, cfg.envelope.dt
    )


def _closed_envelope(cfg: RunConfig, c_omega: float) -> EnvelopeTrajectory:
    lo, hi = cfg.envelope_start()
    source = ASource.closed_bound(c_omega * cfg.diagnostics.c_omega_safety)
    return integrate_envelope(
        Envelope.from_bounds(lo, hi), source, cfg.build_gamma(), cfg.mu, cfg.scheme.t_end, cfg.envelope.dt
    )


def _decay_columns(env: EnvelopeTrajectory, audit: HypothesisAudit):
    try:
        return decay_bound(env.initial, env.mu, audit.mu0_hat, env.times)
    except HypothesisError:
        return None


def _finish(result: CommandResult) -> CommandResult:
    log_event(
        logger,
        "command_finished",
        command=result.command,
        out=str(result.out_dir),
        exit_code=result.exit_code,
        verdict=result.report.verdict if result.report is not None else None,
    )
    return result


def _run_failed(result: CommandResult, cfg: RunConfig, exc: LabError) -> CommandResult:
    """Keep the partial run of a failed simulation and record the failure in metadata."""
    out_dir = result.out_dir
    if exc.trajectory is not None:
        artifacts.write_trajectory(exc.trajectory, out_dir)
    if isinstance(exc, BlowUpError):
        meta = _metadata(cfg, result.command, status="blow_up", blow_up_time=exc.time)
    else:
        meta = _metadata(cfg, result.command, status="error", failed_at=exc.time)
    meta.update(error_kind=type(exc).__name__, error=str(exc), action=exc.action)
    if exc.trajectory is not None:
        meta["trajectory"] = artifacts.trajectory_metadata(exc.trajectory)
    result.files.append(artifacts.write_json(out_dir / artifacts.METADATA_JSON, meta))
    result.exit_code = EXIT_ERROR
    result.error = str(exc)
    return result


# ==================== Commands ====================


def cmd_audit(cfg: RunConfig) -> CommandResult:
    out_dir = _out_dir(cfg)
    result = CommandResult("audit", out_dir)
    with OutputDirectoryLock(out_dir):
        audit = _audit(cfg)
        result.files.append(artifacts.write_json(out_dir / AUDIT_JSON, audit.to_dict()))
        result.exit_code = EXIT_OK if audit.passed else EXIT_CHECK_FAILED
    return _finish(result)


def cmd_constants(cfg: RunConfig) -> CommandResult:
    out_dir = _out_dir(cfg)
    result = CommandResult("constants", out_dir)
    with OutputDirectoryLock(out_dir):
        constants = _constants(cfg)
        payload = {"grid": cfg.build_grid().describe(), **constants.to_dict()}
        result.files.append(artifacts.write_json(out_dir / CONSTANTS_JSON, payload))
    return _finish(result)


def cmd_simulate(cfg: RunConfig) -> CommandResult:
    out_dir = _out_dir(cfg)
    result = CommandResult("simulate", out_dir)
    with OutputDirectoryLock(out_dir):
        _echo_config(cfg, out_dir)
        try:
            traj = _simulate(cfg)
        except LabError as exc:
            if exc.trajectory is None:
                raise
            return _finish(_run_failed(result, cfg, exc))
        artifacts.write_trajectory(traj, out_dir)
        meta = _metadata(cfg, "simulate", status="completed", trajectory=artifacts.trajectory_metadata(traj))
        result.files.append(artifacts.write_json(out_dir / artifacts.METADATA_JSON, meta))
        result.files.append(write_plot_script(out_dir))
    return _finish(result)


def cmd_envelope(cfg: RunConfig) -> CommandResult:
    """Integrate the envelope with the configured a(t) source and write envelope.csv."""
    out_dir = _out_dir(cfg)
    result = CommandResult("envelope", out_dir)
    with OutputDirectoryLock(out_dir):
        _echo_config(cfg, out_dir)
        audit = _audit(cfg)
        meta = _metadata(cfg, "envelope", source=cfg.envelope.source)
        kind = cfg.envelope.source
        if kind == "measured":
            try:
                traj = _simulate(cfg)
            except LabError as exc:
                if exc.trajectory is None:
                    raise
                return _finish(_run_failed(result, cfg, exc))
            artifacts.write_timeseries(traj, out_dir)
            env = _measured_envelope(cfg, traj)
        elif kind == "closed_bound":
            constants = _constants(cfg)
            meta["c_omega_hat"] = constants.c_omega_hat
            env = _closed_envelope(cfg, constants.c_omega_hat)
        else:
            lo, hi = cfg.envelope_start()
            env = integrate_envelope(
                Envelope.from_bounds(lo, hi), ASource.zero(), cfg.build_gamma(), cfg.mu,
                cfg.scheme.t_end, cfg.envelope.dt,
            )
        bounds = _decay_columns(env, audit)
        result.files.append(artifacts.write_envelope(env, out_dir / ENVELOPE_CSV, bounds))
        meta.update(halted=env.halted, violations=len(env.violations))
        result.files.append(artifacts.write_json(out_dir / artifacts.METADATA_JSON, meta))
        result.files.append(write_plot_script(out_dir, [ENVELOPE_CSV]))
    return _finish(result)


def _lp_record(cfg: RunConfig, traj: Trajectory, constants: DomainConstants, audit: HypothesisAudit, out_dir: Path):
    p = cfg.scheme.lp_power
    p_min = max(4.0, traj.grid.dimension + 1.0)
    if p < p_min:
        return CheckRecord(
            name="lp_bound",
            claim=f"int u^{p:g} stays below the bound ODE curve",
            status=CheckStatus.INFORMATIONAL,
            worst_residual=math.nan,
            tolerance=0.0,
            details={"reason": f"p={p:g} is below max(4, N+1)={p_min:g}"},
        )
    c_gamma = audit.c_gamma_hat if math.isfinite(audit.c_gamma_hat) else 0.0
    curve = integrate_lp_bound(
        p,
        float(traj.series["lp"][0]),
        traj.mu,
        traj.grid.volume,
        constants.c_omega_hat * cfg.diagnostics.c_omega_safety,
        c_gamma,
        cfg.scheme.t_end,
        cfg.diagnostics.lp_dt,
        dimension=traj.grid.dimension,
    )
    artifacts.write_lp_curve(curve, out_dir / LP_CURVE_CSV)
    return dx.check_lp_bound(traj, curve)


def _regularization_record(cfg: RunConfig) -> CheckRecord:
    ns = sorted(cfg.diagnostics.regularization_ns)
    eps = cfg.diagnostics.regularization_eps
    try:
        family = run_regularization_family(cfg.build_u0(), cfg.build_gamma(), cfg.mu, cfg.scheme_config(), ns)
    except LabError as exc:
        if exc.trajectory is None:
            raise
        return CheckRecord(
            name="regularization",
            claim="regularized runs approach the limit run as n grows",
            status=CheckStatus.FAIL,
            worst_residual=math.inf,
            tolerance=eps,
            details={"error_kind": type(exc).__name__, "error": str(exc), "failed_at": exc.time},
        )
    distances = [family.distances[n] for n in ns]
    strictly = all(b < a for a, b in zip(distances, distances[1:]))
    final = distances[-1]
    status = CheckStatus.PASS if strictly and final <= eps else CheckStatus.FAIL
    return CheckRecord(
        name="regularization",
        claim="regularized runs approach the limit run as n grows",
        status=status,
        worst_residual=final,
        tolerance=eps,
        details={"distances": {str(n): d for n, d in zip(ns, distances)}, "strictly_decreasing": strictly},
    )


def verify_checks(cfg: RunConfig, out_dir: Path) -> DiagnosticsReport:
    """Run the simulation and envelopes, then evaluate every check with hypothesis gating."""
    audit = _audit(cfg)
    artifacts.write_json(out_dir / AUDIT_JSON, audit.to_dict())
    gate = HypothesisGate.from_audit(audit)
    constants = _constants(cfg)
    artifacts.write_json(out_dir / CONSTANTS_JSON, constants.to_dict())

    traj = _simulate(cfg)
    artifacts.write_trajectory(traj, out_dir)
    tol = dx.discretisation_tolerance(traj, cfg.diagnostics.tol_factor)

    measured = _measured_envelope(cfg, traj)
    artifacts.write_envelope(measured, out_dir / ENVELOPE_CSV, _decay_columns(measured, audit))
    closed = _closed_envelope(cfg, constants.c_omega_hat)
    artifacts.write_envelope(closed, out_dir / CLOSED_ENVELOPE_CSV, _decay_columns(closed, audit))

    signs_ok, mu0_ok, c_gamma_ok = gate.positivity_and_signs, gate.mu0_below_mu, gate.c_gamma_finite
    d = cfg.diagnostics
    checks = [
        dx.audit_record(audit, gates_checks=True),
        dx.constants_record(constants),
        dx.check_positivity(traj),
        dx.check_mass(traj, d.tol_factor),
        dx.gate(_lp_record(cfg, traj, constants, audit, out_dir), c_gamma_ok, "finite c_gamma"),
        dx.gate(dx.check_sandwich(traj, measured, tol), signs_ok, "sign pattern of gamma"),
        dx.gate(dx.check_signal_sandwich(traj, measured, tol), signs_ok, "sign pattern of gamma"),
        dx.gate(
            dx.check_gradient_bound(traj, measured, constants.c_omega_hat, d.c_omega_safety, tol),
            mu0_ok,
            "mu0 < mu",
        ),
        dx.gate(dx.check_rectangle(measured), mu0_ok, "mu0 < mu"),
        dx.gate(dx.check_gap_monotone(measured, d.gap_after, abs_tol=tol), mu0_ok, "mu0 < mu"),
        dx.gate(dx.check_envelope_growth(measured, traj.gamma), mu0_ok, "mu0 < mu"),
        dx.gate(dx.check_decay(closed, traj.gamma, audit.mu0_hat), mu0_ok, "mu0 < mu"),
        dx.gate(dx.check_convergence(traj, measured, cfg.t_check, d.eps, tol), mu0_ok, "mu0 < mu"),
    ]
    if d.regularization_ns:
        checks.append(_regularization_record(cfg))

    metadata = _metadata(cfg, "verify", status="completed", trajectory=artifacts.trajectory_metadata(traj))
    return DiagnosticsReport(checks=tuple(checks), metadata=metadata)


def cmd_verify(cfg: RunConfig) -> CommandResult:
    out_dir = _out_dir(cfg)
    result = CommandResult("verify", out_dir)
    with OutputDirectoryLock(out_dir):
        _echo_config(cfg, out_dir)
        try:
            report = verify_checks(cfg, out_dir)
        except LabError as exc:
            if exc.trajectory is None:
                raise
            return _finish(_run_failed(result, cfg, exc))
        result.report = report
        result.files.extend(write_report(report, out_dir))
        result.files.append(artifacts.write_json(out_dir / artifacts.METADATA_JSON, dict(report.metadata)))
        result.files.append(write_plot_script(out_dir, [ENVELOPE_CSV, CLOSED_ENVELOPE_CSV]))
        result.exit_code = EXIT_OK if report.passed else EXIT_CHECK_FAILED
    return _finish(result)


COMMANDS: Dict[str, object] = {
    "audit": cmd_audit,
    "constants": cmd_constants,
    "simulate": cmd_simulate,
    "envelope": cmd_envelope,
    "verify": cmd_verify,
}
