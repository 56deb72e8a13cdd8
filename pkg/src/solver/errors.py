"""Solver-specific error classes."""

from __future__ import annotations

from typing import Any, Optional


class LabError(Exception):
    """Base class for every error raised by the laboratory.

    Errors raised while stepping a run carry the partial trajectory and the
    time of the last completed state.
    """

    action = "inspect_configuration"
    trajectory: Any = None
    time: Optional[float] = None


class ConfigurationError(LabError, ValueError):
    """Raised when a parameter or setting is outside its admissible range."""

    action = "fix_configuration"

    def __init__(self, message: str = "Invalid configuration."):
        super().__init__(message)


class ConfigParseError(ConfigurationError):
    """Raised when a run configuration document cannot be parsed or validated."""

    def __init__(self, message: str, *, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"{location}{message}")


class DomainError(LabError, ValueError):
    """Raised when a motility function is evaluated at a negative argument."""

    action = "check_signal_values"

    def __init__(self, message: str = "Motility argument must be non-negative."):
        super().__init__(message)


class NonFiniteFieldError(LabError):
    """Raised when a field acquires NaN or Inf values."""

    action = "reduce_time_step"

    def __init__(self, message: str = "Field contains non-finite values."):
        super().__init__(message)


class EllipticSolverError(LabError):
    """Raised when the screened Poisson solve misses its tolerance."""

    action = "raise_iteration_cap_or_tolerance"

    def __init__(self, residual: float, iterations: int, tol: float):
        self.residual = residual
        self.iterations = iterations
        self.tol = tol
        super().__init__(
            f"Screened Poisson solve did not converge: residual={residual:.3e} "
            f"> tol={tol:.3e} after {iterations} iterations."
        )


class DegenerateDiffusionError(LabError):
    """Raised when the motility vanishes on the whole signal range."""

    action = "use_strictly_positive_motility"

    def __init__(self, message: str = "max gamma(v) is zero; diffusion is degenerate."):
        super().__init__(message)


class CflViolationError(LabError):
    """Raised when a step is requested above the stability limit."""

    action = "reduce_time_step"

    def __init__(self, dt: float, dt_max: float):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"Time step dt={dt:.6e} exceeds the CFL limit {dt_max:.6e}.")


class BlowUpError(LabError):
    """Raised when the density develops non-finite values; keeps the partial run."""

    action = "inspect_partial_trajectory"

    def __init__(self, time: float, trajectory: Any = None):
        self.time = time
        self.trajectory = trajectory
        super().__init__(f"Numerical blow-up detected at t={time:.6g}.")


class HypothesisError(LabError, ValueError):
    """Raised when an estimate is requested outside its hypotheses."""

    action = "check_audit"

    def __init__(self, message: str = "Hypothesis mu0 < mu is not satisfied."):
        super().__init__(message)
