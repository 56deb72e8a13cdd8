"""
Explicit time integration of u_t = Lap(gamma(v) u) + mu u (1 - u) coupled to
the screened Poisson solve for v, in the limit form and the n-regularized
form (positive-part reaction, elliptic source u / (1 + u_+/n)).

Two spatial forms are available:
- conservative: forward Euler on the composite field w = gamma(v) u,
- non_divergence: gamma Lap u + 2 gamma' grad v . grad u - u gamma' (u - v)
  + u gamma'' |grad v|^2, with Lap v replaced by v - (elliptic source).
"""

from __future__ import annotations

import array
import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from common.logging_utils import log_event
from solver.elliptic import DEFAULT_TOL, METHODS, solve_screened_poisson
from solver.errors import (
    BlowUpError,
    CflViolationError,
    ConfigurationError,
    DegenerateDiffusionError,
    DomainError,
    LabError,
)
from solver.grid import Field, Grid, apply_neumann_laplacian, grad_sup_norm, gradient, quadrature_weights
from solver.motility import MotilityFamily, MotilityFunction

logger = logging.getLogger(__name__)

TOL_POS = 1e-10
CFL_SLACK = 1e-12

SERIES_COLUMNS = (
    "t",
    "dt",
    "mass",
    "l2sq",
    "lp",
    "min_u",
    "max_u",
    "a_t",
    "sup_dist_u_to_1",
    "sup_dist_v_to_1",
)


class SchemeForm(str, enum.Enum):
    CONSERVATIVE = "conservative"
    NON_DIVERGENCE = "non_divergence"


@dataclass(frozen=True)
class SchemeConfig:
    form: SchemeForm = SchemeForm.CONSERVATIVE
    regularization_n: Optional[int] = None
    cfl_safety: float = 0.5
    t_end: float = 1.0
    output_stride: int = 100
    fixed_dt: Optional[float] = None
    elliptic_tol: float = DEFAULT_TOL
    elliptic_method: str = "cg"
    lp_power: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "form", SchemeForm(self.form))
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigurationError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.regularization_n is not None and self.regularization_n < 1:
            raise ConfigurationError(f"regularization_n must be >= 1, got {self.regularization_n}")
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ConfigurationError(f"t_end must be positive and finite, got {self.t_end}")
        if self.output_stride < 1:
            raise ConfigurationError(f"output_stride must be >= 1, got {self.output_stride}")
        if self.fixed_dt is not None and not self.fixed_dt > 0.0:
            raise ConfigurationError(f"fixed_dt must be positive, got {self.fixed_dt}")
        if self.elliptic_method not in METHODS:
            raise ConfigurationError(f"elliptic_method must be one of {METHODS}, got {self.elliptic_method!r}")
        if not self.lp_power >= 1.0:
            raise ConfigurationError(f"lp_power must be >= 1, got {self.lp_power}")

    @property
    def regularized(self) -> bool:
        return self.regularization_n is not None

    def describe(self) -> dict:
        return {
            "form": self.form.value,
            "regularization_n": self.regularization_n,
            "cfl_safety": self.cfl_safety,
            "t_end": self.t_end,
            "output_stride": self.output_stride,
            "fixed_dt": self.fixed_dt,
            "elliptic_tol": self.elliptic_tol,
            "elliptic_method": self.elliptic_method,
            "lp_power": self.lp_power,
        }


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    u: Field
    v: Field
    a: float
    gamma: MotilityFunction
    mu: float

    @property
    def grid(self) -> Grid:
        return self.u.grid


# ==================== Operators ====================


def elliptic_source(u: np.ndarray, regularization_n: Optional[int]) -> np.ndarray:
    """Right-hand side of the v equation: u, or u / (1 + u_+/n)."""
    if regularization_n is None:
        return u
    return u / (1.0 + np.maximum(u, 0.0) / regularization_n)


def _motility_at(gamma: MotilityFunction, v: np.ndarray):
    # Round-off undershoot of v within TOL_POS is read as 0; anything below raises.
    s = np.where(v >= -TOL_POS, np.maximum(v, 0.0), v)
    return gamma.derivatives(s)


def _solve_v(u: Field, cfg: SchemeConfig, v0: Optional[Field] = None) -> Field:
    source = u.with_values(elliptic_source(u.values, cfg.regularization_n))
    solution = solve_screened_poisson(
        u.grid, source, cfg.elliptic_tol, v0=v0, method=cfg.elliptic_method
    )
    return solution.v


def initial_state(u0: Field, gamma: MotilityFunction, mu: float, cfg: SchemeConfig) -> SimState:
    if not (mu > 0.0 and math.isfinite(mu)):
        raise ConfigurationError(f"mu must be positive and finite, got {mu}")
    if u0.min() <= 0.0:
        raise DomainError(f"Initial density must be strictly positive, got min={u0.min():.6g}")
    v = _solve_v(u0, cfg)
    return SimState(t=0.0, u=u0, v=v, a=grad_sup_norm(v), gamma=gamma, mu=float(mu))


def cfl_dt(state: SimState, cfg: SchemeConfig) -> float:
    """Largest stable forward Euler step for the current state."""
    g0 = _motility_at(state.gamma, state.v.values)[0]
    g_max = float(np.max(g0))
    if g_max <= 0.0:
        raise DegenerateDiffusionError()
    grid = state.grid
    dt_diffusion = cfg.cfl_safety * grid.h_min**2 / (2.0 * grid.dimension * g_max)
    dt_reaction = 1.0 / (2.0 * state.mu * max(1.0, state.u.max()))
    return min(dt_diffusion, dt_reaction)


def density_rhs(state: SimState, cfg: SchemeConfig) -> np.ndarray:
    """Time derivative of u for the configured form and regularization."""
    grid = state.grid
    u = state.u.values
    v = state.v.values
    g0, g1, g2, _ = _motility_at(state.gamma, v)

    if cfg.form is SchemeForm.CONSERVATIVE:
        diffusion = apply_neumann_laplacian(grid, g0 * u)
    else:
        grad_u = gradient(state.u)
        grad_v = gradient(state.v)
        dot = sum(gu * gv for gu, gv in zip(grad_u, grad_v))
        grad_v_sq = sum(gv * gv for gv in grad_v)
        lap_v = v - elliptic_source(u, cfg.regularization_n)
        diffusion = (
            g0 * apply_neumann_laplacian(grid, u)
            + 2.0 * g1 * dot
            + u * g1 * lap_v
            + u * g2 * grad_v_sq
        )

    saturation = np.maximum(u, 0.0) if cfg.regularized else u
    return diffusion + state.mu * u * (1.0 - saturation)


def step(state: SimState, cfg: SchemeConfig, dt: float, dt_max: Optional[float] = None) -> SimState:
    """One forward Euler step followed by the elliptic re-solve.

    dt_max is the CFL limit of state when the caller already has it.
    """
    if dt_max is None:
        dt_max = cfl_dt(state, cfg)
    if dt > dt_max * (1.0 + CFL_SLACK):
        raise CflViolationError(dt, dt_max)

    with np.errstate(over="ignore", invalid="ignore"):
        u_next = state.u.values + dt * density_rhs(state, cfg)
    t_next = state.t + dt
    if not np.all(np.isfinite(u_next)):
        raise BlowUpError(t_next)

    u = state.u.with_values(u_next)
    v = _solve_v(u, cfg, v0=state.v)
    return replace(state, t=t_next, u=u, v=v, a=grad_sup_norm(v))


# ==================== Trajectories ====================


class StepSeries:
    """Scalar diagnostics appended at every step."""

    def __init__(self, lp_power: float = 2.0):
        self.lp_power = lp_power
        self._columns = {name: array.array("d") for name in SERIES_COLUMNS}
        self._weights: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self._columns["t"])

    def _integrals(self, grid: Grid, u: np.ndarray) -> Tuple[float, float, float]:
        if self._weights is None or self._weights.shape != u.shape:
            self._weights = quadrature_weights(grid) * float(np.prod(grid.spacing))
        w = self._weights
        mass = float(np.vdot(w, u))
        u_sq = u * u
        l2sq = float(np.vdot(w, u_sq))
        if self.lp_power == 2.0:
            return mass, l2sq, l2sq
        return mass, l2sq, float(np.vdot(w, np.abs(u) ** self.lp_power))

    def append(self, state: SimState, dt: float) -> None:
        mass, l2sq, lp = self._integrals(state.grid, state.u.values)
        row = {
            "t": state.t,
            "dt": dt,
            "mass": mass,
            "l2sq": l2sq,
            "lp": lp,
            "min_u": state.u.min(),
            "max_u": state.u.max(),
            "a_t": state.a,
            "sup_dist_u_to_1": state.u.sup_distance(1.0),
            "sup_dist_v_to_1": state.v.sup_distance(1.0),
        }
        for name, value in row.items():
            self._columns[name].append(float(value))

    def freeze(self) -> Dict[str, np.ndarray]:
        out = {}
        for name, column in self._columns.items():
            values = np.array(column, dtype=float)
            values.setflags(write=False)
            out[name] = values
        return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    gamma: MotilityFunction
    mu: float
    cfg: SchemeConfig
    snapshots: Tuple[SimState, ...]
    series: Mapping[str, np.ndarray]
    steps: int
    completed: bool = True
    blow_up_time: Optional[float] = None

    @property
    def initial(self) -> SimState:
        return self.snapshots[0]

    @property
    def final(self) -> SimState:
        return self.snapshots[-1]

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def column(self, name: str) -> np.ndarray:
        return self.series[name]


def _partial(grid, gamma, mu, cfg, snapshots, series, steps, blow_up_time=None) -> Trajectory:
    return Trajectory(
        grid=grid,
        gamma=gamma,
        mu=mu,
        cfg=cfg,
        snapshots=tuple(snapshots),
        series=series.freeze(),
        steps=steps,
        completed=False,
        blow_up_time=blow_up_time,
    )


def run(u0: Field, gamma: MotilityFunction, mu: float, cfg: SchemeConfig) -> Trajectory:
    """Advance from u0 to t_end, snapshotting every output_stride steps.

    The a(t) series and the other scalar columns are recorded at every step.
    A non-finite update raises BlowUpError carrying the partial trajectory.
    Any other LabError from a step is re-raised with .trajectory and .time set.
    """
    state = initial_state(u0, gamma, mu, cfg)
    series = StepSeries(cfg.lp_power)
    series.append(state, 0.0)
    snapshots = [state]
    steps = 0
    log_event(
        logger,
        "run_started",
        family=gamma.family.value,
        mu=mu,
        form=cfg.form.value,
        regularization_n=cfg.regularization_n,
        cells=",".join(str(c) for c in u0.grid.cells),
        t_end=cfg.t_end,
    )

    end_eps = 1e-12 * max(1.0, cfg.t_end)
    while cfg.t_end - state.t > end_eps:
        try:
            dt_max = cfl_dt(state, cfg)
            dt = min(dt_max if cfg.fixed_dt is None else cfg.fixed_dt, cfg.t_end - state.t)
            state = step(state, cfg, dt, dt_max=dt_max)
        except BlowUpError as exc:
            partial = _partial(u0.grid, gamma, mu, cfg, snapshots, series, steps, blow_up_time=exc.time)
            log_event(logger, "run_blow_up", level=logging.WARNING, time=exc.time, steps=steps)
            raise BlowUpError(exc.time, trajectory=partial) from exc
        except LabError as exc:
            if snapshots[-1] is not state:
                snapshots.append(state)
            exc.trajectory = _partial(u0.grid, gamma, mu, cfg, snapshots, series, steps)
            exc.time = state.t
            log_event(
                logger,
                "run_failed",
                level=logging.WARNING,
                kind=type(exc).__name__,
                time=state.t,
                steps=steps,
            )
            raise
        steps += 1
        series.append(state, dt)
        if steps % cfg.output_stride == 0:
            snapshots.append(state)
            log_event(logger, "run_snapshot", level=logging.DEBUG, t=f"{state.t:.6g}", min_u=state.u.min())

    if snapshots[-1] is not state:
        snapshots.append(state)

    trajectory = Trajectory(
        grid=u0.grid,
        gamma=gamma,
        mu=mu,
        cfg=cfg,
        snapshots=tuple(snapshots),
        series=series.freeze(),
        steps=steps,
    )
    log_event(
        logger,
        "run_finished",
        steps=steps,
        snapshots=len(snapshots),
        t=f"{state.t:.6g}",
        sup_dist_u_to_1=f"{state.u.sup_distance(1.0):.3e}",
    )
    return trajectory


# ==================== Regularization family ====================


@dataclass(frozen=True, eq=False)
class RegularizationFamily:
    """The limit run plus one regularized run per n on a shared time grid."""

    limit: Trajectory
    members: Mapping[int, Trajectory]
    distances: Mapping[int, float]
    fixed_dt: float

    @property
    def monotone(self) -> bool:
        ordered = [self.distances[n] for n in sorted(self.distances)]
        return all(b <= a for a, b in zip(ordered, ordered[1:]))


def max_snapshot_distance(first: Trajectory, second: Trajectory) -> float:
    """max over shared snapshots of sup |u_first - u_second|."""
    if len(first.snapshots) != len(second.snapshots):
        raise ConfigurationError("Trajectories do not share a snapshot grid")
    worst = 0.0
    for a, b in zip(first.snapshots, second.snapshots):
        if abs(a.t - b.t) > 1e-12 * max(1.0, abs(a.t)):
            raise ConfigurationError(f"Snapshot times differ: {a.t} vs {b.t}")
        worst = max(worst, float(np.max(np.abs(a.u.values - b.u.values))))
    return worst


def _run_job(job):
    u0, gamma, mu, cfg = job
    return run(u0, gamma, mu, cfg)


def run_regularization_family(
    u0: Field,
    gamma: MotilityFunction,
    mu: float,
    cfg: SchemeConfig,
    ns: Sequence[int],
    *,
    workers: int = 1,
) -> RegularizationFamily:
    """Run the limit scheme and each regularized scheme with one fixed dt.

    The shared dt is cfg.fixed_dt, or half the CFL step of the limit
    problem's initial state.
    """
    if not ns:
        raise ConfigurationError("At least one regularization n is required")
    base = replace(cfg, regularization_n=None)
    fixed_dt = cfg.fixed_dt
    if fixed_dt is None:
        fixed_dt = 0.5 * cfl_dt(initial_state(u0, gamma, mu, base), base)
    configs = [replace(base, fixed_dt=fixed_dt)]
    configs += [replace(base, fixed_dt=fixed_dt, regularization_n=int(n)) for n in ns]
    jobs = [(u0, gamma, mu, c) for c in configs]

    # Custom motilities hold plain callables that may not pickle.
    if workers > 1 and gamma.family is not MotilityFamily.CUSTOM:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]

    limit, members = results[0], dict(zip((int(n) for n in ns), results[1:]))
    distances = {n: max_snapshot_distance(traj, limit) for n, traj in members.items()}
    return RegularizationFamily(limit=limit, members=members, distances=distances, fixed_dt=fixed_dt)
