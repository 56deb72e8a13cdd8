"""Bound ODE for the L^p functional: y'/p = mu |Omega| + c_Omega c_gamma y^((p+2)/p)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from solver.errors import ConfigurationError

BLOW_UP_THRESHOLD = 1e12


@dataclass(frozen=True, eq=False)
class LpBoundCurve:
    p: float
    times: np.ndarray
    y: np.ndarray
    blow_up_time: Optional[float] = None

    @property
    def blew_up(self) -> bool:
        return self.blow_up_time is not None

    def covers(self, t: float) -> bool:
        return t <= self.times[-1] and (self.blow_up_time is None or t < self.blow_up_time)

    def value_at(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.y)


def integrate_lp_bound(
    p: float,
    y0: float,
    mu: float,
    vol: float,
    c_omega: float,
    c_gamma: float,
    t_end: float,
    dt: float = 1e-3,
    *,
    dimension: Optional[int] = None,
    threshold: float = BLOW_UP_THRESHOLD,
) -> LpBoundCurve:
    """RK4 solution of the bound ODE; stops at the first step where y exceeds threshold."""
    if dimension is not None and p < max(4.0, dimension + 1.0):
        raise ConfigurationError(f"p must be >= max(4, N+1) = {max(4, dimension + 1)}, got {p}")
    if not p > 0.0:
        raise ConfigurationError(f"p must be positive, got {p}")
    if y0 < 0.0:
        raise ConfigurationError(f"y0 must be non-negative, got {y0}")
    if not (dt > 0.0 and t_end > 0.0):
        raise ConfigurationError("dt and t_end must be positive")

    source = mu * vol
    coeff = c_omega * c_gamma
    exponent = (p + 2.0) / p

    def f(y: float) -> float:
        return p * (source + coeff * np.float64(max(y, 0.0)) ** exponent)

    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    times = [0.0]
    values = [float(y0)]
    y = np.float64(y0)
    blow_up = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_steps + 1):
            t = min(k * dt, t_end)
            h = t - times[-1]
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(y) or y > threshold:
                blow_up = t
                break
            times.append(t)
            values.append(float(y))

    return LpBoundCurve(p=float(p), times=np.array(times), y=np.array(values), blow_up_time=blow_up)
