"""
Tests for the screened Poisson solver and the sampled domain constants.

Tests cover:
1. Accuracy against the cosine eigenfunction and second-order convergence
2. Mass preservation and the discrete maximum principle
3. Warm start, direct path and failure reporting
4. Monotone, seeded estimation of c_Omega and c_p

Run with: pytest tests/test_elliptic.py -v
"""

import logging

import numpy as np
import pytest

from solver.elliptic import (
    estimate_domain_constants,
    screened_residual,
    solve_screened_poisson,
)
from solver.errors import ConfigurationError, EllipticSolverError
from solver.grid import Field, Grid, cosine_mode, integrate

AMPLITUDE = 1.0 / (1.0 + 4.0 * np.pi**2)


def _cos2pi(grid):
    return Field(grid, cosine_mode(grid, [2]))


# ==================== Accuracy ====================


def test_cosine_rhs_gives_scaled_cosine():
    grid = Grid.interval(1.0, 201)
    solution = solve_screened_poisson(grid, _cos2pi(grid), 1e-10)
    assert solution.residual_norm <= 1e-10
    assert solution.v.values[0] == pytest.approx(AMPLITUDE, abs=1e-5)
    np.testing.assert_allclose(solution.v.values, AMPLITUDE * cosine_mode(grid, [2]), atol=1e-5)


def test_second_order_convergence():
    errors = []
    for cells in (101, 201):
        grid = Grid.interval(1.0, cells)
        v = solve_screened_poisson(grid, _cos2pi(grid), 1e-11, method="direct").v
        errors.append(np.max(np.abs(v.values - AMPLITUDE * cosine_mode(grid, [2]))))
    assert 3.5 <= errors[0] / errors[1] <= 4.5


def test_mass_preserved():
    grid = Grid.interval(1.0, 201)
    f = _cos2pi(grid)
    v = solve_screened_poisson(grid, f, 1e-10).v
    assert abs(integrate(v) - integrate(f)) <= 1e-9


def test_mass_preserved_2d():
    grid = Grid.rectangle(1.0, 1.0, 21, 21)
    f = Field.from_function(grid, lambda x, y: 1.0 + 0.5 * np.cos(np.pi * x) * np.cos(2.0 * np.pi * y) + x)
    v = solve_screened_poisson(grid, f, 1e-10).v
    assert abs(integrate(v) - integrate(f)) <= 1e-9


def test_maximum_principle_on_random_data():
    grid = Grid.interval(1.0, 51)
    rng = np.random.default_rng(11)
    for _ in range(200):
        f = Field(grid, rng.uniform(-2.0, 3.0, grid.shape))
        v = solve_screened_poisson(grid, f, 1e-10, method="direct").v
        assert v.min() >= f.min() - 2e-10
        assert v.max() <= f.max() + 2e-10


def test_constant_rhs_returns_itself_without_iterating():
    grid = Grid.interval(1.0, 31)
    solution = solve_screened_poisson(grid, Field.constant(grid, 2.5))
    assert solution.iterations == 0
    assert np.all(solution.v.values == 2.5)


# ==================== Solver paths ====================


def test_warm_start_skips_when_already_within_tolerance():
    grid = Grid.interval(1.0, 51)
    f = _cos2pi(grid)
    first = solve_screened_poisson(grid, f, 1e-10)
    second = solve_screened_poisson(grid, f, 1e-10, v0=first.v)
    assert second.iterations == 0
    np.testing.assert_array_equal(second.v.values, first.v.values)


@pytest.mark.parametrize("grid", [Grid.interval(1.0, 61), Grid.rectangle(1.0, 1.0, 15, 13)], ids=["1d", "2d"])
def test_direct_and_cg_agree(grid):
    f = Field(grid, np.random.default_rng(5).standard_normal(grid.shape))
    cg = solve_screened_poisson(grid, f, 1e-10, method="cg")
    direct = solve_screened_poisson(grid, f, 1e-10, method="direct")
    assert direct.method == "direct"
    assert screened_residual(grid, direct.v.values, f.values) <= 1e-10
    np.testing.assert_allclose(cg.v.values, direct.v.values, atol=2e-10)


def test_invalid_arguments_rejected():
    grid = Grid.interval(1.0, 11)
    f = Field.constant(grid, 1.0)
    with pytest.raises(ConfigurationError):
        solve_screened_poisson(grid, f, 0.0)
    with pytest.raises(ConfigurationError):
        solve_screened_poisson(grid, f, method="lu")


def test_unreachable_tolerance_raises_and_logs(caplog):
    caplog.set_level(logging.WARNING, logger="solver.elliptic")
    grid = Grid.interval(1.0, 11)
    f = Field(grid, np.random.default_rng(3).standard_normal(grid.shape))
    with pytest.raises(EllipticSolverError) as excinfo:
        solve_screened_poisson(grid, f, 1e-30)
    assert excinfo.value.tol == 1e-30
    assert excinfo.value.residual > 1e-30
    assert any("event=elliptic_solve_failed" in r.getMessage() for r in caplog.records)


# ==================== Domain constants ====================


def test_constants_deterministic_for_seed():
    grid = Grid.interval(1.0, 41)
    first = estimate_domain_constants(grid, 8, seed=3, method="direct")
    second = estimate_domain_constants(grid, 8, seed=3, method="direct")
    assert first == second


def test_constants_non_decreasing_in_sample_count():
    grid = Grid.interval(1.0, 41)
    small = estimate_domain_constants(grid, 4, p_list=(4.0,), seed=1, method="direct")
    large = estimate_domain_constants(grid, 12, p_list=(4.0,), seed=1, method="direct")
    assert large.c_omega_hat >= small.c_omega_hat
    for p, value in small.c_p_hat.items():
        assert large.c_p_hat[p] >= value
    assert list(large.history) == sorted(large.history)
    assert large.history[: len(small.history)] == small.history


def test_constants_include_n_plus_one_and_remark_holds_on_interval():
    grid = Grid.interval(1.0, 41)
    constants = estimate_domain_constants(grid, 9, seed=0, method="direct")
    assert 2.0 in constants.c_p_hat
    assert constants.c_p_hat[2.0] >= 1.0
    assert 0.0 < constants.c_omega_hat <= 1.0
    assert constants.remark_holds
    payload = constants.to_dict()
    assert set(payload) == {"c_omega_hat", "c_p", "samples", "seed", "remark_bound", "remark_holds"}
    assert "2" in payload["c_p"]


def test_constants_in_two_dimensions():
    grid = Grid.rectangle(1.0, 1.0, 15, 15)
    constants = estimate_domain_constants(grid, 5, seed=2, method="direct")
    assert 3.0 in constants.c_p_hat
    assert constants.c_omega_hat > 0.0


def test_constants_reject_bad_arguments():
    grid = Grid.rectangle(1.0, 1.0, 9, 9)
    with pytest.raises(ConfigurationError):
        estimate_domain_constants(grid, 0)
    with pytest.raises(ConfigurationError):
        estimate_domain_constants(grid, 3, p_list=(1.0,))
