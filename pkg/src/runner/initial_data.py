"""Initial density presets and the automatic envelope straddle."""

from __future__ import annotations

import enum
from typing import Tuple

import numpy as np

from solver.errors import ConfigurationError
from solver.grid import Field, Grid, cosine_mode


class U0Preset(str, enum.Enum):
    CONSTANT = "constant"
    COSINE_BUMP = "cosine_bump"
    RANDOM_SMOOTH = "random_smooth"


def constant(grid: Grid, value: float) -> Field:
    return Field.constant(grid, value)


def cosine_bump(grid: Grid, value: float, amplitude: float, wavenumber: int) -> Field:
    """value + amplitude * prod_i cos(k pi x_i / L_i)."""
    return Field(grid, value + amplitude * cosine_mode(grid, [wavenumber] * grid.dimension))


def random_smooth(grid: Grid, value: float, amplitude: float, modes: int, seed: int) -> Field:
    """value + amplitude * (random Neumann cosine series, sup-normalised on the grid)."""
    rng = np.random.default_rng(seed)
    series = np.zeros(grid.shape)
    for ks in np.ndindex(*([modes + 1] * grid.dimension)):
        if sum(ks) == 0:
            continue
        series = series + rng.standard_normal() / float(sum(ks)) ** 2 * cosine_mode(grid, ks)
    peak = float(np.max(np.abs(series)))
    if peak > 0.0:
        series = series / peak
    return Field(grid, value + amplitude * series)


def build_initial_data(
    grid: Grid,
    preset: str,
    *,
    value: float = 1.0,
    amplitude: float = 0.5,
    wavenumber: int = 1,
    modes: int = 6,
    seed: int = 0,
) -> Field:
    try:
        kind = U0Preset(preset)
    except ValueError as exc:
        raise ConfigurationError(f"Unknown initial data preset: {preset!r}") from exc
    if kind is U0Preset.CONSTANT:
        u0 = constant(grid, value)
    elif kind is U0Preset.COSINE_BUMP:
        u0 = cosine_bump(grid, value, amplitude, wavenumber)
    else:
        u0 = random_smooth(grid, value, amplitude, modes, seed)
    if u0.min() <= 0.0:
        raise ConfigurationError(f"Initial density must be strictly positive, got min={u0.min():.6g}")
    return u0


def auto_envelope(u0: Field, delta: float) -> Tuple[float, float]:
    """(min(min u0, 1 - delta), max(max u0, 1 + delta)); must straddle 1 strictly."""
    lo = min(u0.min(), 1.0 - delta)
    hi = max(u0.max(), 1.0 + delta)
    if not (0.0 < lo < 1.0 < hi):
        raise ConfigurationError(
            f"Automatic envelope ({lo:.6g}, {hi:.6g}) does not straddle 1; use a positive delta"
        )
    return lo, hi
