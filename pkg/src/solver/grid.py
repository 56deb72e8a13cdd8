"""
Vertex-centred structured grids on intervals and rectangles with homogeneous
Neumann boundary conditions.

Ghost values mirror the first interior neighbour, so the discrete Laplacian
annihilates constants, is self-adjoint for the trapezoidal inner product, and
integrates to zero exactly (discrete zero-flux divergence theorem).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid

from solver.errors import ConfigurationError, NonFiniteFieldError

MIN_CELLS = 3


@dataclass(frozen=True)
class Grid:
    """Uniform vertex-centred grid on [0, L_1] x ... with 1 or 2 axes."""

    extents: Tuple[float, ...]
    cells: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if len(self.extents) not in (1, 2) or len(self.extents) != len(self.cells):
            raise ConfigurationError(
                f"Grid needs 1 or 2 axes with matching extents/cells, got {self.extents} / {self.cells}"
            )
        if any(c < MIN_CELLS for c in self.cells):
            raise ConfigurationError(f"Grid needs at least {MIN_CELLS} vertices per axis, got {self.cells}")
        if any(not (e > 0.0 and math.isfinite(e)) for e in self.extents):
            raise ConfigurationError(f"Grid extents must be positive, got {self.extents}")

    @classmethod
    def interval(cls, length: float = 1.0, cells: int = 201) -> "Grid":
        return cls((length,), (cells,))

    @classmethod
    def rectangle(cls, lx: float, ly: float, nx: int, ny: int) -> "Grid":
        return cls((lx, ly), (nx, ny))

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(e / (c - 1) for e, c in zip(self.extents, self.cells))

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def h_max(self) -> float:
        return max(self.spacing)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.linspace(0.0, e, c) for e, c in zip(self.extents, self.cells))

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """Vertex coordinates, one array of grid shape per axis."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def describe(self) -> dict:
        return {
            "dimension": self.dimension,
            "extents": list(self.extents),
            "cells": list(self.cells),
            "spacing": list(self.spacing),
            "volume": self.volume,
        }


@dataclass(frozen=True, eq=False)
class Field:
    """One scalar value per grid vertex; always finite."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError(f"Field on grid {self.grid.cells} contains NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        """Sample fn(x) (1D) or fn(x, y) (2D) at the vertices."""
        return cls(grid, np.broadcast_to(fn(*grid.coordinates()), grid.shape))

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def min(self) -> float:
        return float(np.min(self.values))

    def max(self) -> float:
        return float(np.max(self.values))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def sup_distance(self, value: float) -> float:
        return float(np.max(np.abs(self.values - value)))


# ==================== Stencils ====================


def _mirror_pad(values: np.ndarray) -> np.ndarray:
    # numpy "reflect" excludes the edge: ghost = first interior neighbour.
    return np.pad(values, 1, mode="reflect")


def apply_neumann_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Raw-array 3-point / 5-point Laplacian with mirror ghosts."""
    padded = _mirror_pad(values)
    out = np.zeros(grid.shape)
    centre = (slice(1, -1),) * grid.dimension
    for axis, h in enumerate(grid.spacing):
        fwd = list(centre)
        bwd = list(centre)
        fwd[axis] = slice(2, None)
        bwd[axis] = slice(None, -2)
        out += (padded[tuple(fwd)] - 2.0 * padded[centre] + padded[tuple(bwd)]) / (h * h)
    return out


def laplacian_neumann(f: Field) -> Field:
    """Second-order Neumann Laplacian of f."""
    return f.with_values(apply_neumann_laplacian(f.grid, f.values))


def gradient(f: Field) -> Tuple[np.ndarray, ...]:
    """Centred differences inside, one-sided second order at boundary vertices."""
    if f.grid.dimension == 1:
        return (np.gradient(f.values, f.grid.spacing[0], edge_order=2),)
    return tuple(np.gradient(f.values, *f.grid.spacing, edge_order=2))


def grad_sup_norm(f: Field) -> float:
    """max over vertices of |grad f| (Euclidean norm)."""
    comps = gradient(f)
    magnitude = np.sqrt(sum(c * c for c in comps))
    return float(np.max(magnitude))


def integrate_values(grid: Grid, values: np.ndarray) -> float:
    """Trapezoidal quadrature of a raw array on the grid."""
    result = values
    for axis, h in reversed(list(enumerate(grid.spacing))):
        result = trapezoid(result, dx=h, axis=axis)
    return float(result)


def integrate(f: Field) -> float:
    """Trapezoidal quadrature, exact for affine fields."""
    return integrate_values(f.grid, f.values)


def lp_norm(f: Field, p: float) -> float:
    return integrate_values(f.grid, np.abs(f.values) ** p) ** (1.0 / p)


@functools.lru_cache(maxsize=32)
def quadrature_weights(grid: Grid) -> np.ndarray:
    """Trapezoidal weights normalised so interior vertices weigh 1."""
    per_axis = []
    for c in grid.cells:
        w = np.ones(c)
        w[0] = w[-1] = 0.5
        per_axis.append(w)
    weights = per_axis[0] if grid.dimension == 1 else np.multiply.outer(per_axis[0], per_axis[1])
    weights.setflags(write=False)
    return weights


@functools.lru_cache(maxsize=32)
def neumann_laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Assembled sparse form of apply_neumann_laplacian (row-major ordering)."""

    def _axis_matrix(n: int, h: float) -> sp.csr_matrix:
        main = np.full(n, -2.0)
        upper = np.ones(n - 1)
        lower = np.ones(n - 1)
        upper[0] = 2.0
        lower[-1] = 2.0
        return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / (h * h)

    mats = [_axis_matrix(c, h) for c, h in zip(grid.cells, grid.spacing)]
    if grid.dimension == 1:
        return mats[0].tocsr()
    nx, ny = grid.cells
    return (sp.kron(mats[0], sp.identity(ny)) + sp.kron(sp.identity(nx), mats[1])).tocsr()


def smooth_once(grid: Grid, values: np.ndarray) -> np.ndarray:
    """One pass of the mirror-padded nearest-neighbour average."""
    padded = _mirror_pad(values)
    centre = (slice(1, -1),) * grid.dimension
    acc = np.array(padded[centre], dtype=float)
    count = 1
    for axis in range(grid.dimension):
        fwd = list(centre)
        bwd = list(centre)
        fwd[axis] = slice(2, None)
        bwd[axis] = slice(None, -2)
        acc = acc + padded[tuple(fwd)] + padded[tuple(bwd)]
        count += 2
    return acc / count


def cosine_mode(grid: Grid, wavenumbers: Sequence[int]) -> np.ndarray:
    """prod_i cos(k_i pi x_i / L_i): a Neumann eigenfunction of the Laplacian."""
    out = np.ones(grid.shape)
    for coord, k, length in zip(grid.coordinates(), wavenumbers, grid.extents):
        out = out * np.cos(k * np.pi * coord / length)
    return out
