"""
Screened Poisson solves -Lap v + v = f with Neumann conditions, and sampled
estimates of the domain constants c_Omega and c_p.

The discrete operator (I - L_h) is self-adjoint for the trapezoidal inner
product, so the solve runs conjugate gradients on the symmetrised operator
D (I - L_h) D^-1 with D = diag(sqrt(w)). The residual contract is stated in
the max norm of the unsymmetrised equation.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from common.logging_utils import log_event
from solver.errors import ConfigurationError, EllipticSolverError
from solver.grid import (
    Field,
    Grid,
    apply_neumann_laplacian,
    cosine_mode,
    grad_sup_norm,
    lp_norm,
    neumann_laplacian_matrix,
    quadrature_weights,
    smooth_once,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
ITERATION_CAP_FACTOR = 10
REFINEMENT_PASSES = 3
METHODS = ("cg", "direct")


@dataclass(frozen=True)
class EllipticSolution:
    v: Field
    residual_norm: float
    iterations: int
    method: str = "cg"


def screened_residual(grid: Grid, v: np.ndarray, f: np.ndarray) -> float:
    """max |(I - L_h) v - f|."""
    return float(np.max(np.abs(v - apply_neumann_laplacian(grid, v) - f)))


class _SymmetrisedOperator:
    """D (I - L_h) D^-1 as a matrix-free LinearOperator, one per grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        w = quadrature_weights(grid).ravel()
        self.d = np.sqrt(w)
        self.d_inv = 1.0 / self.d
        self.operator = LinearOperator((grid.size, grid.size), matvec=self._matvec, dtype=float)

    def _matvec(self, y: np.ndarray) -> np.ndarray:
        x = (self.d_inv * np.ravel(y)).reshape(self.grid.shape)
        return self.d * (x - apply_neumann_laplacian(self.grid, x)).ravel()


@functools.lru_cache(maxsize=16)
def _symmetrised(grid: Grid) -> _SymmetrisedOperator:
    return _SymmetrisedOperator(grid)


@functools.lru_cache(maxsize=8)
def _factorised(grid: Grid):
    matrix = sp.identity(grid.size, format="csc") - neumann_laplacian_matrix(grid).tocsc()
    return splu(matrix.tocsc())


def solve_screened_poisson(
    grid: Grid,
    f: Field,
    tol: float = DEFAULT_TOL,
    *,
    v0: Optional[Field] = None,
    method: str = "cg",
) -> EllipticSolution:
    """Solve (I - L_h) v = f to max-norm residual <= tol.

    v0 warm-starts the iteration; if it already meets the tolerance it is
    returned unchanged.
    """
    if not tol > 0.0:
        raise ConfigurationError(f"Elliptic tolerance must be positive, got {tol}")
    if method not in METHODS:
        raise ConfigurationError(f"Unknown elliptic method {method!r}; expected one of {METHODS}")

    rhs = f.values
    guess = (v0.values if v0 is not None else rhs).copy()
    residual = screened_residual(grid, guess, rhs)
    if residual <= tol:
        return EllipticSolution(f.with_values(guess), residual, 0, method)

    if method == "direct":
        lu = _factorised(grid)
        x = lu.solve(rhs.ravel()).reshape(grid.shape)
        iterations = 1
        residual = screened_residual(grid, x, rhs)
        for _ in range(REFINEMENT_PASSES):
            if residual <= tol:
                break
            r = rhs - (x - apply_neumann_laplacian(grid, x))
            x = x + lu.solve(r.ravel()).reshape(grid.shape)
            iterations += 1
            residual = screened_residual(grid, x, rhs)
    else:
        x, residual, iterations = _solve_cg(grid, rhs, guess, tol)

    if residual > tol:
        log_event(
            logger,
            "elliptic_solve_failed",
            level=logging.WARNING,
            method=method,
            residual=f"{residual:.3e}",
            iterations=iterations,
            tol=tol,
        )
        raise EllipticSolverError(residual, iterations, tol)
    return EllipticSolution(f.with_values(x), residual, iterations, method)


def _solve_cg(grid: Grid, rhs: np.ndarray, guess: np.ndarray, tol: float):
    sym = _symmetrised(grid)
    cap = ITERATION_CAP_FACTOR * grid.size
    # ||r||_inf <= max(D^-1) ||D r||_2, so this atol bounds the max-norm residual.
    atol = tol / float(np.max(sym.d_inv))
    b = sym.d * rhs.ravel()
    y = sym.d * guess.ravel()
    count = [0]

    def _count(_xk):
        count[0] += 1

    x = guess
    residual = screened_residual(grid, x, rhs)
    for _ in range(REFINEMENT_PASSES):
        remaining = cap - count[0]
        if remaining <= 0:
            break
        y, _info = cg(sym.operator, b, x0=y, rtol=0.0, atol=atol, maxiter=remaining, callback=_count)
        x = (sym.d_inv * y).reshape(grid.shape)
        residual = screened_residual(grid, x, rhs)
        if residual <= tol:
            break
    return x, residual, count[0]


# ==================== Domain constants ====================


@dataclass(frozen=True)
class DomainConstants:
    """Sampled lower bounds of c_Omega and c_p for one grid."""

    c_omega_hat: float
    c_p_hat: Dict[float, float]
    samples: int
    seed: int
    dimension: int
    volume: float
    history: Sequence[float] = field(default=(), repr=False, compare=False)

    @property
    def remark_bound(self) -> float:
        """|Omega|^(1/(N+1)) * c_{N+1}_hat."""
        p = float(self.dimension + 1)
        return self.volume ** (1.0 / p) * self.c_p_hat[p]

    @property
    def remark_holds(self) -> bool:
        return self.c_omega_hat <= self.remark_bound

    def to_dict(self) -> dict:
        return {
            "c_omega_hat": self.c_omega_hat,
            "c_p": {f"{p:g}": value for p, value in sorted(self.c_p_hat.items())},
            "samples": self.samples,
            "seed": self.seed,
            "remark_bound": self.remark_bound,
            "remark_holds": self.remark_holds,
        }


def _bump(grid: Grid, centre: Sequence[float], width: float) -> np.ndarray:
    r2 = np.zeros(grid.shape)
    for coord, c in zip(grid.coordinates(), centre):
        r2 = r2 + (coord - c) ** 2
    r = np.sqrt(r2)
    return np.where(r < width, np.cos(0.5 * np.pi * r / width) ** 2, 0.0)


def _random_smooth(grid: Grid, rng: np.random.Generator, max_mode: int = 8) -> np.ndarray:
    out = np.zeros(grid.shape)
    ranges = [range(max_mode + 1)] * grid.dimension
    for ks in np.ndindex(*[len(r) for r in ranges]):
        amplitude = rng.standard_normal() / (1.0 + sum(ks)) ** 1.5
        out = out + amplitude * cosine_mode(grid, ks)
    return out


def sample_right_hand_sides(grid: Grid, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Deterministic samples first, then alternating random smooth / indicator fields."""
    yield np.ones(grid.shape)
    yield _bump(grid, [0.5 * e for e in grid.extents], 0.25 * min(grid.extents))
    yield _bump(grid, [0.0] * grid.dimension, 0.25 * min(grid.extents))
    while True:
        smooth = _random_smooth(grid, rng)
        yield smooth
        yield smooth_once(grid, np.where(_random_smooth(grid, rng) >= 0.0, 1.0, -1.0))
        centre = [rng.uniform(0.0, e) for e in grid.extents]
        yield _bump(grid, centre, rng.uniform(0.05, 0.5) * min(grid.extents))


def estimate_domain_constants(
    grid: Grid,
    n_samples: int,
    p_list: Sequence[float] = (),
    *,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    method: str = "cg",
) -> DomainConstants:
    """Maxima over sampled f of |grad v|_inf / |f|_inf and |v|_inf / |f|_p.

    The sample sequence depends only on the seed, so estimates are
    non-decreasing in n_samples. p = N + 1 is always included.
    """
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    powers = sorted({float(p) for p in p_list} | {float(grid.dimension + 1)})
    for p in powers:
        if not p > grid.dimension / 2.0:
            raise ConfigurationError(f"Every p must exceed N/2 = {grid.dimension / 2}, got p={p}")

    rng = np.random.default_rng(seed)
    c_omega = 0.0
    c_p = {p: 0.0 for p in powers}
    history = []
    samples = sample_right_hand_sides(grid, rng)
    for _ in range(n_samples):
        f = Field(grid, next(samples))
        sup_f = f.sup_norm()
        if sup_f == 0.0:
            history.append(c_omega)
            continue
        v = solve_screened_poisson(grid, f, tol, method=method).v
        c_omega = max(c_omega, grad_sup_norm(v) / sup_f)
        sup_v = v.sup_norm()
        for p in powers:
            c_p[p] = max(c_p[p], sup_v / lp_norm(f, p))
        history.append(c_omega)

    constants = DomainConstants(
        c_omega_hat=c_omega,
        c_p_hat=c_p,
        samples=n_samples,
        seed=seed,
        dimension=grid.dimension,
        volume=grid.volume,
        history=tuple(history),
    )
    log_event(
        logger,
        "domain_constants_estimated",
        samples=n_samples,
        seed=seed,
        c_omega_hat=f"{c_omega:.6g}",
        remark_holds=constants.remark_holds,
    )
    return constants
