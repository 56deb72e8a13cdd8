"""
Monitors that turn the qualitative estimates into pass/fail records over
trajectories.

Checks never raise for a falsified inequality; they return a CheckRecord.
A check whose hypotheses the motility audit did not confirm is downgraded to
informational. Tolerances follow the additive model C (h^2 + dt).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from common.logging_utils import log_event
from solver.comparison import ASourceKind, EnvelopeTrajectory, decay_bound, envelope_rhs
from solver.elliptic import DomainConstants
from solver.errors import ConfigurationError
from solver.motility import HypothesisAudit, MotilityFunction
from solver.pde import TOL_POS, Trajectory
from verifier.lp_bound import LpBoundCurve

logger = logging.getLogger(__name__)

DEFAULT_TOL_FACTOR = 10.0
DEFAULT_C_OMEGA_SAFETY = 1.5
MASS_BOUND_SLACK = 1e-6
RATIO_SLACK = 1e-8
DECAY_SLACK = 1e-3

CHECK_REFERENCES = {
    "hypothesis_audit": "structural hypotheses on gamma",
    "domain_constants": "elliptic gradient constant and its Sobolev bound",
    "positivity": "positivity of the density",
    "mass": "mass identity and mass bound",
    "lp_bound": "L^p differential inequality for int u^p",
    "sandwich": "comparison principle for u",
    "signal_sandwich": "comparison principle for v",
    "gradient_bound": "gradient estimate for the screened Poisson problem",
    "rectangle": "invariant rectangle of the envelope system",
    "gap_monotone": "monotone envelope gap",
    "envelope_growth": "growth bound of the upper envelope",
    "decay": "exponential decay of the envelope ratio",
    "convergence": "global convergence to the constant state",
    "regularization": "convergence of the regularized problems",
}


class CheckStatus(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INFORMATIONAL = "informational"
    PRECONDITION_VIOLATED = "precondition_violated"


@dataclass(frozen=True)
class CheckRecord:
    name: str
    claim: str
    status: CheckStatus
    worst_residual: float
    tolerance: float
    worst_time: Optional[float] = None
    details: Mapping[str, Any] = field(default_factory=dict)
    reference: str = ""

    def __post_init__(self) -> None:
        if not self.reference:
            object.__setattr__(self, "reference", CHECK_REFERENCES.get(self.name, ""))

    @property
    def gating(self) -> bool:
        return self.status in (CheckStatus.FAIL, CheckStatus.PRECONDITION_VIOLATED)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "claim": self.claim,
            "reference": self.reference,
            "status": self.status.value,
            "worst_residual": self.worst_residual,
            "tolerance": self.tolerance,
            "worst_time": self.worst_time,
            "details": dict(self.details),
        }


@dataclass(frozen=True)
class HypothesisGate:
    """Which structural hypotheses the audit confirmed."""

    positivity_and_signs: bool = True
    mu0_below_mu: bool = True
    c_gamma_finite: bool = True

    @classmethod
    def from_audit(cls, audit: HypothesisAudit) -> "HypothesisGate":
        return cls(
            positivity_and_signs=audit.positivity_ok and audit.signs_ok,
            mu0_below_mu=audit.positivity_ok and audit.signs_ok and audit.mu0_ok,
            c_gamma_finite=audit.c_gamma_ok,
        )


def gate(record: CheckRecord, satisfied: bool, hypothesis: str) -> CheckRecord:
    """Downgrade a record to informational when its hypothesis is unmet."""
    if satisfied:
        return record
    details = dict(record.details)
    details["gated_by"] = hypothesis
    details["ungated_status"] = record.status.value
    return replace(record, status=CheckStatus.INFORMATIONAL, details=details)


def _record(name, claim, ok, residual, tol, worst_time=None, **details) -> CheckRecord:
    record = CheckRecord(
        name=name,
        claim=claim,
        status=CheckStatus.PASS if ok else CheckStatus.FAIL,
        worst_residual=float(residual),
        tolerance=float(tol),
        worst_time=None if worst_time is None else float(worst_time),
        details=details,
    )
    log_event(
        logger,
        "check_evaluated",
        check=name,
        status=record.status.value,
        residual=f"{record.worst_residual:.3e}",
        tol=f"{record.tolerance:.3e}",
    )
    return record


def discretisation_tolerance(traj: Trajectory, factor: float = DEFAULT_TOL_FACTOR) -> float:
    """factor * (h^2 + dt) with the coarsest spacing and largest step of the run."""
    dts = np.asarray(traj.series["dt"])
    dt = float(np.max(dts)) if dts.size else 0.0
    return factor * (traj.grid.h_max**2 + dt)


def _check_mu(traj: Trajectory, env: EnvelopeTrajectory) -> None:
    if not math.isclose(traj.mu, env.mu, rel_tol=1e-12):
        raise ConfigurationError(f"Envelope mu={env.mu} does not match trajectory mu={traj.mu}")


def _envelope_at(env: EnvelopeTrajectory, t: float):
    return float(np.interp(t, env.times, env.lo)), float(np.interp(t, env.times, env.hi))


def _covered_snapshots(traj: Trajectory, env: EnvelopeTrajectory):
    t_max = float(env.times[-1]) * (1.0 + 1e-12)
    return [s for s in traj.snapshots if s.t <= t_max]


# ==================== Trajectory monitors ====================


def check_positivity(traj: Trajectory, tol: float = TOL_POS) -> CheckRecord:
    worst_value = math.inf
    worst_time = 0.0
    for snap in traj.snapshots:
        if snap.u.min() < worst_value:
            worst_value, worst_time = snap.u.min(), snap.t
    series_min = np.asarray(traj.series.get("min_u", ()))
    if series_min.size and float(np.min(series_min)) < worst_value:
        idx = int(np.argmin(series_min))
        worst_value, worst_time = float(series_min[idx]), float(traj.series["t"][idx])
    residual = max(0.0, -worst_value)
    return _record(
        "positivity",
        "density stays non-negative",
        worst_value >= -tol,
        residual,
        tol,
        worst_time,
        min_u=worst_value,
    )


def check_mass(traj: Trajectory, factor: float = DEFAULT_TOL_FACTOR) -> CheckRecord:
    """Per-step balance dM/dt = mu (M - int u^2) with midpoint averages, plus the mass bound."""
    t = np.asarray(traj.series["t"])
    mass = np.asarray(traj.series["mass"])
    l2sq = np.asarray(traj.series["l2sq"])
    tol = discretisation_tolerance(traj, factor)
    bound = max(float(mass[0]), traj.grid.volume) * (1.0 + MASS_BOUND_SLACK)
    max_mass = float(np.max(mass))

    residual, worst_time = 0.0, None
    if t.size >= 2:
        dt = np.diff(t)
        rate = np.diff(mass) / dt
        expected = traj.mu * (0.5 * (mass[1:] + mass[:-1]) - 0.5 * (l2sq[1:] + l2sq[:-1]))
        errors = np.abs(rate - expected)
        idx = int(np.argmax(errors))
        residual, worst_time = float(errors[idx]), float(t[idx + 1])

    bound_ok = max_mass <= bound
    return _record(
        "mass",
        "mass follows dM/dt = mu M - mu int u^2 and stays below max(M(0), |Omega|)",
        residual <= tol and bound_ok,
        residual,
        tol,
        worst_time,
        max_mass=max_mass,
        mass_bound=bound,
        mass_bound_ok=bound_ok,
    )


def _sandwich(name, claim, traj, env, values_of, tol) -> CheckRecord:
    _check_mu(traj, env)
    u0 = traj.initial.u
    start = env.initial
    slack = 1e-12
    if start.lo > u0.min() + slack or u0.max() > start.hi + slack:
        record = CheckRecord(
            name=name,
            claim=claim,
            status=CheckStatus.PRECONDITION_VIOLATED,
            worst_residual=max(start.lo - u0.min(), u0.max() - start.hi),
            tolerance=tol,
            worst_time=0.0,
            details={"reason": "envelope start does not enclose u0"},
        )
        log_event(logger, "check_evaluated", check=name, status=record.status.value)
        return record

    worst, worst_time = -math.inf, None
    snapshots = _covered_snapshots(traj, env)
    for snap in snapshots:
        lo, hi = _envelope_at(env, snap.t)
        values = values_of(snap)
        excess = max(lo - float(np.min(values)), float(np.max(values)) - hi)
        if excess > worst:
            worst, worst_time = excess, snap.t
    residual = max(0.0, worst)
    return _record(
        name,
        claim,
        residual <= tol,
        residual,
        tol,
        worst_time,
        snapshots_checked=len(snapshots),
        snapshots_skipped=len(traj.snapshots) - len(snapshots),
    )


def check_sandwich(traj: Trajectory, env: EnvelopeTrajectory, tol: Optional[float] = None) -> CheckRecord:
    tol = discretisation_tolerance(traj) if tol is None else tol
    return _sandwich(
        "sandwich", "u_lo(t) <= u(x, t) <= u_hi(t)", traj, env, lambda s: s.u.values, tol
    )


def check_signal_sandwich(
    traj: Trajectory, env: EnvelopeTrajectory, tol: Optional[float] = None
) -> CheckRecord:
    tol = discretisation_tolerance(traj) if tol is None else tol
    return _sandwich(
        "signal_sandwich", "u_lo(t) <= v(x, t) <= u_hi(t)", traj, env, lambda s: s.v.values, tol
    )


def check_gradient_bound(
    traj: Trajectory,
    env: EnvelopeTrajectory,
    c_omega: float,
    safety: float = DEFAULT_C_OMEGA_SAFETY,
    tol: Optional[float] = None,
) -> CheckRecord:
    _check_mu(traj, env)
    tol = discretisation_tolerance(traj) if tol is None else tol
    worst, worst_time = -math.inf, None
    for snap in _covered_snapshots(traj, env):
        lo, hi = _envelope_at(env, snap.t)
        excess = snap.a - safety * c_omega * (hi - lo)
        if excess > worst:
            worst, worst_time = excess, snap.t
    residual = max(0.0, worst)
    return _record(
        "gradient_bound",
        "|grad v|_inf <= c_Omega (u_hi - u_lo)",
        residual <= tol,
        residual,
        tol,
        worst_time,
        c_omega=c_omega,
        safety=safety,
    )


def check_convergence(
    traj: Trajectory,
    env: Optional[EnvelopeTrajectory],
    t_check: float,
    eps: float,
    tol: Optional[float] = None,
) -> CheckRecord:
    """sup|u-1| + sup|v-1| <= eps after t_check, and sup|u-1|, sup|v-1| <= |u_hi-1| + |u_lo-1| + tol."""
    tol = discretisation_tolerance(traj) if tol is None else tol
    late = [s for s in traj.snapshots if s.t >= t_check - 1e-12]
    if not late:
        record = CheckRecord(
            name="convergence",
            claim="u and v converge to 1",
            status=CheckStatus.PRECONDITION_VIOLATED,
            worst_residual=math.inf,
            tolerance=eps,
            details={"reason": f"run ends at t={traj.final.t:.6g}, before t_check={t_check:.6g}"},
        )
        log_event(logger, "check_evaluated", check="convergence", status=record.status.value)
        return record

    distances = [s.u.sup_distance(1.0) + s.v.sup_distance(1.0) for s in late]
    idx = int(np.argmax(distances))
    residual, worst_time = float(distances[idx]), late[idx].t

    triangle = 0.0
    if env is not None:
        _check_mu(traj, env)
        for snap in _covered_snapshots(traj, env):
            lo, hi = _envelope_at(env, snap.t)
            allowance = abs(hi - 1.0) + abs(lo - 1.0)
            triangle = max(
                triangle,
                snap.u.sup_distance(1.0) - allowance,
                snap.v.sup_distance(1.0) - allowance,
            )
    triangle_ok = triangle <= tol
    return _record(
        "convergence",
        "u and v converge to 1 within the envelope distance",
        residual <= eps and triangle_ok,
        residual,
        eps,
        worst_time,
        t_check=t_check,
        triangle_excess=triangle,
        triangle_tolerance=tol,
        triangle_ok=triangle_ok,
    )


# ==================== Envelope monitors ====================


def check_rectangle(env: EnvelopeTrajectory) -> CheckRecord:
    """0 < u_lo < 1 < u_hi at every step, in log variables."""
    excess = np.maximum(env.log_lo, -env.log_hi)
    idx = int(np.argmax(excess))
    worst = float(excess[idx])
    if not env.strict_start:
        record = CheckRecord(
            name="rectangle",
            claim="0 < u_lo < 1 < u_hi",
            status=CheckStatus.INFORMATIONAL,
            worst_residual=max(0.0, worst),
            tolerance=0.0,
            worst_time=float(env.times[idx]),
            details={"reason": "envelope start does not strictly straddle 1"},
        )
        log_event(logger, "check_evaluated", check="rectangle", status=record.status.value)
        return record
    ok = not env.violations and worst < 0.0
    return _record(
        "rectangle",
        "0 < u_lo < 1 < u_hi",
        ok,
        max(0.0, worst),
        0.0,
        float(env.times[idx]),
        violations=len(env.violations),
        halted=env.halted,
    )


def check_gap_monotone(
    env: EnvelopeTrajectory, after: float = 1.0, rel_tol: float = 1e-12, abs_tol: float = 0.0
) -> CheckRecord:
    """u_hi - u_lo is non-increasing after `after`.

    An increase counts only above max(rel_tol * max gap, abs_tol); abs_tol is
    the discretisation tolerance when the envelope is driven by a measured a(t).
    """
    gap = env.gap
    mask = env.times >= after - 1e-12
    if np.count_nonzero(mask) < 2:
        return _record("gap_monotone", "u_hi - u_lo is non-increasing", True, 0.0, abs_tol, after=after)
    window = gap[mask]
    increases = np.diff(window)
    idx = int(np.argmax(increases))
    tol = max(rel_tol * float(np.max(np.abs(window))), abs_tol)
    worst = max(0.0, float(increases[idx]))
    return _record(
        "gap_monotone",
        "u_hi - u_lo is non-increasing",
        worst <= tol,
        worst,
        tol,
        float(env.times[mask][idx + 1]),
        after=after,
    )


def check_envelope_growth(env: EnvelopeTrajectory, gamma: MotilityFunction, tol: float = 1e-6) -> CheckRecord:
    """log u_hi(t) <= log(u_hi0/u_lo0) + gamma''(0) int_0^t a."""
    d2_at_zero = float(gamma.derivatives(0.0)[2])
    integral = cumulative_trapezoid(env.a_used, env.times, initial=0.0)
    bound = env.log_gap[0] + d2_at_zero * integral
    excess = env.log_hi - bound
    idx = int(np.argmax(excess))
    residual = max(0.0, float(excess[idx]))
    return _record(
        "envelope_growth",
        "log u_hi stays below log(u_hi0/u_lo0) + gamma''(0) int a",
        residual <= tol,
        residual,
        tol,
        float(env.times[idx]),
        final_bound=float(bound[-1]),
    )


def check_decay(
    env: EnvelopeTrajectory,
    gamma: MotilityFunction,
    mu0_hat: float,
    slack: float = DECAY_SLACK,
) -> CheckRecord:
    """Decay of the closed-bound envelope gap.

    Asserts the conservative exponential bound, the pointwise derivative
    bound d/dt log(u_hi/u_lo) <= (mu0 - mu)(u_hi - u_lo), and the ratio bound
    u_hi/u_lo <= u_hi0/u_lo0. The printed-exponent variant is reported only.
    """
    if env.source.kind is not ASourceKind.CLOSED_BOUND:
        raise ConfigurationError("Decay check needs an envelope driven by the closed bound")
    mu = env.mu
    if not mu0_hat < mu:
        record = CheckRecord(
            name="decay",
            claim="log(u_hi/u_lo) decays exponentially",
            status=CheckStatus.INFORMATIONAL,
            worst_residual=math.nan,
            tolerance=slack,
            details={"reason": f"mu0_hat={mu0_hat:.6g} is not below mu={mu:.6g}"},
        )
        log_event(logger, "check_evaluated", check="decay", status=record.status.value)
        return record

    start = env.initial
    bounds = decay_bound(start, mu, mu0_hat, env.times)
    log_gap = env.log_gap
    conservative_excess = log_gap - bounds.conservative * (1.0 + slack)
    idx = int(np.argmax(conservative_excess))
    conservative_worst = max(0.0, float(conservative_excess[idx]))
    printed_violations = int(np.count_nonzero(log_gap > bounds.printed * (1.0 + slack)))

    derivative_worst = 0.0
    for k in range(env.times.size):
        env_k = env.at(k)
        d_hi, d_lo = envelope_rhs(env_k, float(env.a_used[k]), gamma, mu)
        limit = (mu0_hat - mu) * env_k.gap
        derivative_worst = max(derivative_worst, (d_hi - d_lo) - limit - 1e-12 * (1.0 + abs(limit)))

    ratio_limit = math.exp(start.log_hi - start.log_lo) * (1.0 + RATIO_SLACK)
    ratio_worst = max(0.0, float(np.max(np.exp(log_gap))) - ratio_limit)

    ok = conservative_worst <= 0.0 and derivative_worst <= 0.0 and ratio_worst <= 0.0
    return _record(
        "decay",
        "log(u_hi/u_lo) decays at least at the conservative exponential rate",
        ok,
        conservative_worst,
        slack,
        float(env.times[idx]),
        derivative_excess=derivative_worst,
        ratio_excess=ratio_worst,
        printed_variant_violations=printed_violations,
        mu0_hat=mu0_hat,
    )


def check_lp_bound(traj: Trajectory, curve: LpBoundCurve, rel_tol: float = 1e-9) -> CheckRecord:
    """Measured int u^p stays below the bound ODE curve where the curve exists."""
    if not math.isclose(traj.cfg.lp_power, curve.p):
        raise ConfigurationError(f"Curve power p={curve.p} does not match recorded power {traj.cfg.lp_power}")
    t = np.asarray(traj.series["t"])
    measured = np.asarray(traj.series["lp"])
    mask = np.array([curve.covers(float(ti)) for ti in t])
    worst, worst_time = 0.0, None
    if np.any(mask):
        limit = curve.value_at(t[mask])
        excess = measured[mask] - limit * (1.0 + rel_tol)
        idx = int(np.argmax(excess))
        worst, worst_time = max(0.0, float(excess[idx])), float(t[mask][idx])
    record = _record(
        "lp_bound",
        f"int u^{curve.p:g} stays below the bound ODE curve",
        worst <= 0.0,
        worst,
        rel_tol,
        worst_time,
        blow_up_time=curve.blow_up_time,
        points_checked=int(np.count_nonzero(mask)),
    )
    if curve.blew_up and curve.blow_up_time < traj.final.t:
        details = dict(record.details)
        details["reason"] = "bound curve blows up before the end of the run"
        record = replace(record, status=CheckStatus.INFORMATIONAL, details=details)
    return record


# ==================== Audit and constants records ====================


def audit_record(audit: HypothesisAudit, gates_checks: bool = False) -> CheckRecord:
    """The hypothesis audit as a record.

    With gates_checks the unmet hypotheses already downgrade the dependent
    checks, so a failed audit is reported as informational.
    """
    record = _record(
        "hypothesis_audit",
        "gamma is positive with the required sign pattern, mu0 < mu and c_gamma finite",
        audit.passed,
        max(0.0, -audit.margin),
        0.0,
        None,
        **{k: v for k, v in audit.to_dict().items() if k != "passed"},
    )
    if gates_checks and not audit.passed:
        details = dict(record.details)
        details["ungated_status"] = record.status.value
        details["reason"] = "unmet hypotheses gate the dependent checks"
        record = replace(record, status=CheckStatus.INFORMATIONAL, details=details)
    return record


def constants_record(constants: DomainConstants) -> CheckRecord:
    record = _record(
        "domain_constants",
        "c_Omega <= |Omega|^(1/(N+1)) c_(N+1)",
        constants.remark_holds,
        max(0.0, constants.c_omega_hat - constants.remark_bound),
        0.0,
        None,
        **constants.to_dict(),
    )
    return replace(record, status=CheckStatus.INFORMATIONAL)

