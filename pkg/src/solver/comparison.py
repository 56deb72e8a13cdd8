"""
Comparison envelope (u_lo, u_hi) integrated in log variables.

    d/dt log u_hi = -gamma'(u_lo)(u_hi - u_lo) + gamma''(u_lo) a(t) + mu (1 - u_hi)
    d/dt log u_lo = -gamma'(u_lo)(u_lo - u_hi) + mu (1 - u_lo)

a(t) is either measured from a PDE run, the closed bound c_Omega (u_hi - u_lo)^2,
or zero. Differences near 1 are formed with expm1 so that late-time envelopes
do not lose the gap to rounding.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from common.logging_utils import log_event
from solver.errors import ConfigurationError, HypothesisError
from solver.motility import MotilityFunction

logger = logging.getLogger(__name__)

DEFAULT_ENVELOPE_DT = 1e-3


@dataclass(frozen=True)
class Envelope:
    t: float
    log_lo: float
    log_hi: float

    @classmethod
    def from_bounds(cls, lo: float, hi: float, t: float = 0.0) -> "Envelope":
        if not (lo > 0.0 and hi > 0.0):
            raise ConfigurationError(f"Envelope bounds must be positive, got lo={lo}, hi={hi}")
        return cls(t=float(t), log_lo=math.log(lo), log_hi=math.log(hi))

    @property
    def lo(self) -> float:
        return math.exp(self.log_lo)

    @property
    def hi(self) -> float:
        return math.exp(self.log_hi)

    @property
    def gap(self) -> float:
        return _gap(self.log_lo, self.log_hi)

    @property
    def straddles_one(self) -> bool:
        """Strict rectangle condition 0 < u_lo < 1 < u_hi."""
        return self.log_lo < 0.0 < self.log_hi


def _gap(log_lo: float, log_hi: float) -> float:
    return math.exp(log_lo) * math.expm1(log_hi - log_lo)


# ==================== a(t) sources ====================


class ASourceKind(str, enum.Enum):
    MEASURED = "measured"
    CLOSED_BOUND = "closed_bound"
    ZERO = "zero"


@dataclass(frozen=True, eq=False)
class ASource:
    kind: ASourceKind
    times: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    c_omega: float = 0.0

    @classmethod
    def measured(cls, times, values) -> "ASource":
        t = np.asarray(times, dtype=float)
        a = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != a.shape or t.size < 2:
            raise ConfigurationError("Measured a(t) needs matching 1D time and value arrays of length >= 2")
        if np.any(np.diff(t) <= 0.0):
            raise ConfigurationError("Measured a(t) times must be strictly increasing")
        if np.any(a < 0.0) or not np.all(np.isfinite(a)):
            raise ConfigurationError("Measured a(t) must be finite and non-negative")
        return cls(ASourceKind.MEASURED, times=t, values=a)

    @classmethod
    def closed_bound(cls, c_omega: float) -> "ASource":
        if not (c_omega >= 0.0 and math.isfinite(c_omega)):
            raise ConfigurationError(f"c_omega must be finite and non-negative, got {c_omega}")
        return cls(ASourceKind.CLOSED_BOUND, c_omega=float(c_omega))

    @classmethod
    def zero(cls) -> "ASource":
        return cls(ASourceKind.ZERO)

    @property
    def t_max(self) -> float:
        return float(self.times[-1]) if self.kind is ASourceKind.MEASURED else math.inf

    def value(self, t: float, log_lo: float, log_hi: float) -> float:
        if self.kind is ASourceKind.MEASURED:
            return float(np.interp(t, self.times, self.values))
        if self.kind is ASourceKind.CLOSED_BOUND:
            return self.c_omega * _gap(log_lo, log_hi) ** 2
        return 0.0

    def describe(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is ASourceKind.CLOSED_BOUND:
            out["c_omega"] = self.c_omega
        if self.kind is ASourceKind.MEASURED:
            out["samples"] = int(self.times.size)
            out["t_max"] = self.t_max
        return out


# ==================== Right-hand side and integration ====================


def _rhs(log_lo: float, log_hi: float, a: float, gamma: MotilityFunction, mu: float) -> Tuple[float, float]:
    _, g1, g2, _ = gamma.derivatives(math.exp(log_lo))
    gap = _gap(log_lo, log_hi)
    d_hi = -g1 * gap + g2 * a - mu * math.expm1(log_hi)
    d_lo = g1 * gap - mu * math.expm1(log_lo)
    return d_hi, d_lo


def envelope_rhs(env: Envelope, a: float, gamma: MotilityFunction, mu: float) -> Tuple[float, float]:
    """Return (d log u_hi/dt, d log u_lo/dt); gamma' and gamma'' are taken at u_lo."""
    if a < 0.0:
        raise ConfigurationError(f"a must be non-negative, got {a}")
    return _rhs(env.log_lo, env.log_hi, a, gamma, mu)


@dataclass(frozen=True, eq=False)
class EnvelopeTrajectory:
    times: np.ndarray
    log_lo: np.ndarray
    log_hi: np.ndarray
    a_used: np.ndarray
    source: ASource
    mu: float
    dt: float
    strict_start: bool
    violations: Tuple[Tuple[int, float], ...] = ()
    halted: bool = False

    @property
    def lo(self) -> np.ndarray:
        return np.exp(self.log_lo)

    @property
    def hi(self) -> np.ndarray:
        return np.exp(self.log_hi)

    @property
    def log_gap(self) -> np.ndarray:
        return self.log_hi - self.log_lo

    @property
    def gap(self) -> np.ndarray:
        return np.exp(self.log_lo) * np.expm1(self.log_hi - self.log_lo)

    @property
    def initial(self) -> Envelope:
        return Envelope(float(self.times[0]), float(self.log_lo[0]), float(self.log_hi[0]))

    @property
    def final(self) -> Envelope:
        return Envelope(float(self.times[-1]), float(self.log_lo[-1]), float(self.log_hi[-1]))

    def at(self, index: int) -> Envelope:
        return Envelope(float(self.times[index]), float(self.log_lo[index]), float(self.log_hi[index]))


def integrate_envelope(
    env0: Envelope,
    source: ASource,
    gamma: MotilityFunction,
    mu: float,
    t_end: float,
    dt: float = DEFAULT_ENVELOPE_DT,
) -> EnvelopeTrajectory:
    """Classical RK4 on (log u_hi, log u_lo) with step times t_k = k dt.

    When the start strictly straddles 1, the first step leaving
    log u_lo < 0 < log u_hi is recorded and integration halts there.
    An ordering violation (u_lo > u_hi) or a non-finite value halts in
    every case.
    """
    if not dt > 0.0:
        raise ConfigurationError(f"Envelope dt must be positive, got {dt}")
    if not t_end > env0.t:
        raise ConfigurationError(f"Envelope t_end must exceed the start time {env0.t}, got {t_end}")
    if not (env0.log_lo <= 0.0 <= env0.log_hi):
        raise ConfigurationError(
            f"Envelope start must satisfy 0 < u_lo <= 1 <= u_hi, got ({env0.lo:.6g}, {env0.hi:.6g})"
        )
    if source.kind is ASourceKind.MEASURED and t_end > source.t_max * (1.0 + 1e-12):
        raise ConfigurationError(f"Measured a(t) ends at t={source.t_max:.6g}, before t_end={t_end:.6g}")

    n_steps = max(1, math.ceil((t_end - env0.t) / dt - 1e-9))
    strict = env0.straddles_one
    times = [env0.t]
    lo = [env0.log_lo]
    hi = [env0.log_hi]
    a_used = [source.value(env0.t, env0.log_lo, env0.log_hi)]
    violations = []
    halted = False

    def f(t: float, y_hi: float, y_lo: float) -> Tuple[float, float]:
        a = source.value(min(t, t_end), y_lo, y_hi)
        return _rhs(y_lo, y_hi, a, gamma, mu)

    y_hi, y_lo, t = env0.log_hi, env0.log_lo, env0.t
    for k in range(1, n_steps + 1):
        t_next = min(env0.t + k * dt, t_end)
        h = t_next - t
        k1 = f(t, y_hi, y_lo)
        k2 = f(t + 0.5 * h, y_hi + 0.5 * h * k1[0], y_lo + 0.5 * h * k1[1])
        k3 = f(t + 0.5 * h, y_hi + 0.5 * h * k2[0], y_lo + 0.5 * h * k2[1])
        k4 = f(t + h, y_hi + h * k3[0], y_lo + h * k3[1])
        y_hi = y_hi + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y_lo = y_lo + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        t = t_next

        if not (math.isfinite(y_hi) and math.isfinite(y_lo)):
            violations.append((k, t))
            halted = True
            break
        times.append(t)
        hi.append(y_hi)
        lo.append(y_lo)
        a_used.append(source.value(t, y_lo, y_hi))

        if (strict and not (y_lo < 0.0 < y_hi)) or y_lo > y_hi:
            violations.append((k, t))
            halted = True
            log_event(
                logger,
                "envelope_rectangle_violation",
                level=logging.WARNING,
                step=k,
                t=f"{t:.6g}",
                log_lo=f"{y_lo:.6e}",
                log_hi=f"{y_hi:.6e}",
            )
            break

    trajectory = EnvelopeTrajectory(
        times=np.array(times),
        log_lo=np.array(lo),
        log_hi=np.array(hi),
        a_used=np.array(a_used),
        source=source,
        mu=float(mu),
        dt=float(dt),
        strict_start=strict,
        violations=tuple(violations),
        halted=halted,
    )
    log_event(
        logger,
        "envelope_integrated",
        source=source.kind.value,
        steps=len(times) - 1,
        t=f"{times[-1]:.6g}",
        final_gap=f"{trajectory.gap[-1]:.3e}",
        halted=halted,
    )
    return trajectory


# ==================== Decay estimate ====================


@dataclass(frozen=True)
class DecayBound:
    """Upper bounds on log u_hi - log u_lo at the requested times."""

    printed: Union[float, np.ndarray]
    conservative: Union[float, np.ndarray]


def decay_bound(env0: Envelope, mu: float, mu0: float, t) -> DecayBound:
    """log(u_hi0/u_lo0) e^{(mu0-mu) r t} with r = u_hi0/u_lo0 (printed) or u_lo0/u_hi0 (conservative)."""
    if not mu0 < mu:
        raise HypothesisError(f"Decay bound needs mu0 < mu, got mu0={mu0:.6g}, mu={mu:.6g}")
    if env0.log_lo > env0.log_hi:
        raise ConfigurationError("Envelope start must satisfy u_lo <= u_hi")
    t_arr = np.asarray(t, dtype=float)
    log_ratio = env0.log_hi - env0.log_lo
    ratio = math.exp(log_ratio)
    rate = mu0 - mu
    printed = log_ratio * np.exp(rate * ratio * t_arr)
    conservative = log_ratio * np.exp(rate * t_arr / ratio)
    if t_arr.ndim == 0:
        return DecayBound(float(printed), float(conservative))
    return DecayBound(printed, conservative)
