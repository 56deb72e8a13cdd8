"""
Motility functions gamma(s) and the numerical audit of their structural hypotheses.

Built-in families carry closed-form derivatives up to third order. Custom
motilities supply all four callables explicitly; nothing is differentiated
automatically.

The audit evaluates on a dense uniform grid over [0, s_max]:
- strict positivity of gamma (reports gamma_min),
- the sign pattern gamma' <= 0, gamma'' >= 0, gamma''' <= 0,
- mu0_hat = max(-2 gamma'(s) + gamma''(s) s), which must stay below mu,
- c_gamma_hat = max(gamma'(s)^2 / gamma(s)), which must be finite.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np

from common.logging_utils import log_event
from solver.errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
Derivatives = Tuple[ArrayLike, ArrayLike, ArrayLike, ArrayLike]

DEFAULT_AUDIT_S_MAX = 50.0
DEFAULT_AUDIT_POINTS = 1_000_000
MIN_AUDIT_POINTS = 1_000


class MotilityFamily(str, enum.Enum):
    EXPONENTIAL = "exponential"
    INVERSE_POWER = "inverse_power"
    CONSTANT = "constant"
    HILL = "hill"
    CUSTOM = "custom"


def _exponential(s: np.ndarray, alpha: float) -> Derivatives:
    e = np.exp(-alpha * s)
    return e, -alpha * e, alpha**2 * e, -(alpha**3) * e


def _inverse_power(s: np.ndarray, epsilon: float, alpha: float) -> Derivatives:
    base = epsilon + s
    g0 = base ** (-alpha)
    g1 = -alpha * base ** (-alpha - 1.0)
    g2 = alpha * (alpha + 1.0) * base ** (-alpha - 2.0)
    g3 = -alpha * (alpha + 1.0) * (alpha + 2.0) * base ** (-alpha - 3.0)
    return g0, g1, g2, g3


def _constant(s: np.ndarray, c: float) -> Derivatives:
    zero = np.zeros_like(s)
    return np.full_like(s, c), zero, zero.copy(), zero.copy()


def _hill(s: np.ndarray, k: float, m: float) -> Derivatives:
    # q = (s/k)^m and its derivatives written without dividing by s (m >= 3).
    scale = k ** (-m)
    q = scale * s**m
    q1 = m * scale * s ** (m - 1.0)
    q2 = m * (m - 1.0) * scale * s ** (m - 2.0)
    q3 = m * (m - 1.0) * (m - 2.0) * scale * s ** (m - 3.0)
    inv = 1.0 / (1.0 + q)
    g0 = inv
    g1 = -(inv**2) * q1
    g2 = 2.0 * inv**3 * q1**2 - inv**2 * q2
    g3 = -6.0 * inv**4 * q1**3 + 6.0 * inv**3 * q1 * q2 - inv**2 * q3
    return g0, g1, g2, g3


@dataclass(frozen=True)
class MotilityFunction:
    """Immutable motility gamma with its first three derivatives."""

    family: MotilityFamily
    params: Tuple[Tuple[str, float], ...] = ()
    name: str = ""
    _custom: Optional[Tuple[Callable, Callable, Callable, Callable]] = field(
        default=None, repr=False, compare=False
    )

    # ---------- constructors ----------

    @classmethod
    def exponential(cls, alpha: float) -> "MotilityFunction":
        _require_positive(alpha=alpha)
        return cls(MotilityFamily.EXPONENTIAL, (("alpha", float(alpha)),))

    @classmethod
    def inverse_power(cls, epsilon: float, alpha: float) -> "MotilityFunction":
        _require_positive(epsilon=epsilon, alpha=alpha)
        return cls(MotilityFamily.INVERSE_POWER, (("epsilon", float(epsilon)), ("alpha", float(alpha))))

    @classmethod
    def constant(cls, c: float) -> "MotilityFunction":
        _require_positive(c=c)
        return cls(MotilityFamily.CONSTANT, (("c", float(c)),))

    @classmethod
    def hill(cls, k: float, m: float) -> "MotilityFunction":
        _require_positive(k=k)
        if not m >= 3.0:
            raise ConfigurationError(f"Hill exponent m must be >= 3 for a C^3 motility, got m={m}")
        return cls(MotilityFamily.HILL, (("k", float(k)), ("m", float(m))))

    @classmethod
    def custom(
        cls,
        name: str,
        value: Callable[[np.ndarray], np.ndarray],
        d1: Callable[[np.ndarray], np.ndarray],
        d2: Callable[[np.ndarray], np.ndarray],
        d3: Callable[[np.ndarray], np.ndarray],
    ) -> "MotilityFunction":
        return cls(MotilityFamily.CUSTOM, (), name=name, _custom=(value, d1, d2, d3))

    @classmethod
    def from_spec(cls, family: str, **params: float) -> "MotilityFunction":
        """Build a built-in family from its config name and parameters."""
        try:
            kind = MotilityFamily(family)
        except ValueError as exc:
            raise ConfigurationError(f"Unknown motility family: {family!r}") from exc
        builders = {
            MotilityFamily.EXPONENTIAL: lambda: cls.exponential(params["alpha"]),
            MotilityFamily.INVERSE_POWER: lambda: cls.inverse_power(params["epsilon"], params["alpha"]),
            MotilityFamily.CONSTANT: lambda: cls.constant(params["c"]),
            MotilityFamily.HILL: lambda: cls.hill(params["k"], params["m"]),
        }
        if kind not in builders:
            raise ConfigurationError("Custom motilities cannot be built from a configuration document")
        try:
            return builders[kind]()
        except KeyError as exc:
            raise ConfigurationError(f"Motility family {family!r} requires parameter {exc.args[0]!r}") from exc

    # ---------- evaluation ----------

    def param(self, key: str) -> float:
        return dict(self.params)[key]

    def describe(self) -> dict:
        return {"family": self.family.value, "params": dict(self.params), "name": self.name or None}

    def derivatives(self, s: ArrayLike) -> Derivatives:
        """Return (gamma, gamma', gamma'', gamma''') at s >= 0."""
        scalar = np.isscalar(s) or np.ndim(s) == 0
        arr = np.asarray(s, dtype=float)
        if np.any(arr < 0.0):
            raise DomainError(f"Motility argument must be non-negative, got min={float(np.min(arr)):.6g}")
        p = dict(self.params)
        if self.family is MotilityFamily.EXPONENTIAL:
            out = _exponential(arr, p["alpha"])
        elif self.family is MotilityFamily.INVERSE_POWER:
            out = _inverse_power(arr, p["epsilon"], p["alpha"])
        elif self.family is MotilityFamily.CONSTANT:
            out = _constant(arr, p["c"])
        elif self.family is MotilityFamily.HILL:
            out = _hill(arr, p["k"], p["m"])
        else:
            out = tuple(np.asarray(fn(arr), dtype=float) * np.ones_like(arr) for fn in self._custom)
        if scalar:
            return tuple(float(x) for x in out)
        return out

    def value(self, s: ArrayLike) -> ArrayLike:
        return self.derivatives(s)[0]


def evaluate(gamma: MotilityFunction, s: ArrayLike) -> Derivatives:
    """Evaluate gamma and its first three derivatives at s."""
    return gamma.derivatives(s)


def _require_positive(**params: float) -> None:
    for key, value in params.items():
        if not (value > 0.0 and np.isfinite(value)):
            raise ConfigurationError(f"Motility parameter {key} must be positive and finite, got {value!r}")


# ==================== Hypothesis audit ====================


@dataclass(frozen=True)
class HypothesisAudit:
    """Numerical audit of positivity, sign pattern, mu0 and c_gamma."""

    mu: float
    mu0_hat: float
    c_gamma_hat: float
    gamma_min: float
    s_max: float
    grid_points: int
    sign_checks: Tuple[Tuple[str, bool], ...]
    offending_s: Tuple[Tuple[str, float], ...]
    mu0_at_boundary: bool
    c_gamma_at_boundary: bool

    @property
    def margin(self) -> float:
        return self.mu - self.mu0_hat

    @property
    def positivity_ok(self) -> bool:
        return dict(self.sign_checks)["positive"]

    @property
    def signs_ok(self) -> bool:
        checks = dict(self.sign_checks)
        return checks["d1_nonpositive"] and checks["d2_nonnegative"] and checks["d3_nonpositive"]

    @property
    def mu0_ok(self) -> bool:
        return self.mu0_hat < self.mu

    @property
    def c_gamma_ok(self) -> bool:
        return bool(np.isfinite(self.c_gamma_hat))

    @property
    def passed(self) -> bool:
        return self.positivity_ok and self.signs_ok and self.mu0_ok and self.c_gamma_ok

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "mu0_hat": self.mu0_hat,
            "c_gamma_hat": self.c_gamma_hat,
            "gamma_min": self.gamma_min,
            "s_max": self.s_max,
            "grid_points": self.grid_points,
            "margin": self.margin,
            "sign_checks": dict(self.sign_checks),
            "offending_s": dict(self.offending_s),
            "mu0_at_boundary": self.mu0_at_boundary,
            "c_gamma_at_boundary": self.c_gamma_at_boundary,
            "passed": self.passed,
        }


def audit_hypotheses(
    gamma: MotilityFunction,
    mu: float,
    s_max: float = DEFAULT_AUDIT_S_MAX,
    n_points: int = DEFAULT_AUDIT_POINTS,
) -> HypothesisAudit:
    """Audit gamma on a uniform grid of n_points over [0, s_max].

    Sign violations never raise; they mark the audit failed and record the
    first offending s.
    """
    if not s_max > 0.0:
        raise ConfigurationError(f"s_max must be positive, got {s_max}")
    if n_points < MIN_AUDIT_POINTS:
        raise ConfigurationError(f"n_points must be at least {MIN_AUDIT_POINTS}, got {n_points}")

    s = np.linspace(0.0, s_max, int(n_points))
    g0, g1, g2, g3 = gamma.derivatives(s)

    checks = {
        "positive": g0 > 0.0,
        "d1_nonpositive": g1 <= 0.0,
        "d2_nonnegative": g2 >= 0.0,
        "d3_nonpositive": g3 <= 0.0,
    }
    sign_checks = tuple((name, bool(np.all(ok))) for name, ok in checks.items())
    offending = tuple(
        (name, float(s[np.argmin(ok)])) for name, ok in checks.items() if not np.all(ok)
    )

    mu0_curve = -2.0 * g1 + g2 * s
    mu0_idx = int(np.argmax(mu0_curve))
    with np.errstate(divide="ignore", invalid="ignore"):
        cg_curve = np.where(g0 > 0.0, g1**2 / g0, np.inf)
    cg_idx = int(np.argmax(cg_curve))

    audit = HypothesisAudit(
        mu=float(mu),
        mu0_hat=float(mu0_curve[mu0_idx]),
        c_gamma_hat=float(cg_curve[cg_idx]),
        gamma_min=float(np.min(g0)),
        s_max=float(s_max),
        grid_points=int(n_points),
        sign_checks=sign_checks,
        offending_s=offending,
        mu0_at_boundary=mu0_idx == len(s) - 1,
        c_gamma_at_boundary=cg_idx == len(s) - 1,
    )
    log_event(
        logger,
        "motility_audit",
        family=gamma.family.value,
        mu=mu,
        mu0_hat=f"{audit.mu0_hat:.6g}",
        c_gamma_hat=f"{audit.c_gamma_hat:.6g}",
        gamma_min=f"{audit.gamma_min:.6g}",
        passed=audit.passed,
    )
    return audit
