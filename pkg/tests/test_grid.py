"""
Tests for grids, fields and the Neumann difference operators.

Run with: pytest tests/test_grid.py -v
"""

import numpy as np
import pytest

from solver.errors import ConfigurationError, NonFiniteFieldError
from solver.grid import (
    Field,
    Grid,
    apply_neumann_laplacian,
    cosine_mode,
    gradient,
    grad_sup_norm,
    integrate,
    integrate_values,
    laplacian_neumann,
    lp_norm,
    neumann_laplacian_matrix,
    quadrature_weights,
)


def _random_field(grid, seed=0):
    return Field(grid, np.random.default_rng(seed).standard_normal(grid.shape))


# ==================== Grid and Field ====================


@pytest.mark.parametrize(
    "extents, cells",
    [((1.0,), (2,)), ((1.0, 1.0, 1.0), (5, 5, 5)), ((-1.0,), (11,)), ((1.0, 1.0), (11,))],
)
def test_invalid_grids_rejected(extents, cells):
    with pytest.raises(ConfigurationError):
        Grid(extents, cells)


def test_grid_geometry():
    grid = Grid.rectangle(2.0, 1.0, 21, 11)
    assert grid.dimension == 2
    assert grid.shape == (21, 11)
    assert grid.size == 231
    assert grid.spacing == pytest.approx((0.1, 0.1))
    assert grid.volume == 2.0
    assert Grid.interval(1.0, 201).spacing[0] == pytest.approx(0.005)


def test_field_rejects_non_finite_values(line_grid):
    values = np.ones(line_grid.shape)
    values[3] = np.nan
    with pytest.raises(NonFiniteFieldError):
        Field(line_grid, values)


def test_field_values_are_read_only(line_grid):
    field = Field.constant(line_grid, 2.0)
    with pytest.raises(ValueError):
        field.values[0] = 1.0
    assert field.sup_distance(1.0) == 1.0


def test_from_function_2d_uses_both_coordinates(square_grid):
    field = Field.from_function(square_grid, lambda x, y: x + 2.0 * y)
    assert field.values[-1, 0] == pytest.approx(1.0)
    assert field.values[0, -1] == pytest.approx(2.0)


# ==================== Laplacian ====================


def test_laplacian_annihilates_constants(line_grid, square_grid):
    for grid in (line_grid, square_grid):
        assert np.all(laplacian_neumann(Field.constant(grid, 3.7)).values == 0.0)


@pytest.mark.parametrize("grid", [Grid.interval(1.0, 51), Grid.rectangle(1.0, 2.0, 21, 17)], ids=["1d", "2d"])
def test_laplacian_integrates_to_zero(grid):
    f = _random_field(grid, seed=1)
    assert abs(integrate(laplacian_neumann(f))) <= 1e-10 * max(1.0, f.sup_norm())


@pytest.mark.parametrize("grid", [Grid.interval(1.0, 51), Grid.rectangle(1.0, 2.0, 21, 17)], ids=["1d", "2d"])
def test_laplacian_self_adjoint_in_trapezoid_product(grid):
    f = _random_field(grid, seed=2)
    g = _random_field(grid, seed=3)
    left = integrate_values(grid, laplacian_neumann(f).values * g.values)
    right = integrate_values(grid, f.values * laplacian_neumann(g).values)
    assert left == pytest.approx(right, rel=1e-10, abs=1e-8)


def test_cosine_mode_is_discrete_eigenvector():
    grid = Grid.interval(1.0, 41)
    h = grid.spacing[0]
    for k in (1, 2, 5):
        mode = cosine_mode(grid, [k])
        eigenvalue = -(2.0 - 2.0 * np.cos(k * np.pi * h)) / (h * h)
        np.testing.assert_allclose(apply_neumann_laplacian(grid, mode), eigenvalue * mode, atol=1e-9 * abs(eigenvalue))


def test_laplacian_second_order_accurate():
    errors = []
    for cells in (51, 101):
        grid = Grid.interval(1.0, cells)
        f = Field(grid, cosine_mode(grid, [1]))
        exact = -np.pi**2 * f.values
        errors.append(np.max(np.abs(laplacian_neumann(f).values - exact)))
    assert 3.5 <= errors[0] / errors[1] <= 4.5


@pytest.mark.parametrize("grid", [Grid.interval(1.0, 13), Grid.rectangle(1.0, 0.5, 7, 9)], ids=["1d", "2d"])
def test_assembled_matrix_matches_stencil(grid):
    f = _random_field(grid, seed=4)
    assembled = neumann_laplacian_matrix(grid) @ f.values.ravel()
    np.testing.assert_allclose(assembled, apply_neumann_laplacian(grid, f.values).ravel(), rtol=1e-12, atol=1e-9)


# ==================== Gradient and quadrature ====================


def test_gradient_exact_for_quadratics():
    grid = Grid.interval(1.0, 11)
    f = Field.from_function(grid, lambda x: x**2)
    np.testing.assert_allclose(gradient(f)[0], 2.0 * grid.axes()[0], atol=1e-12)
    assert grad_sup_norm(f) == pytest.approx(2.0)


def test_gradient_2d_components(square_grid):
    f = Field.from_function(square_grid, lambda x, y: 3.0 * x - 4.0 * y)
    gx, gy = gradient(f)
    np.testing.assert_allclose(gx, 3.0)
    np.testing.assert_allclose(gy, -4.0)
    assert grad_sup_norm(f) == pytest.approx(5.0)


def test_trapezoid_exact_for_affine_and_bilinear(square_grid):
    line = Grid.interval(1.0, 7)
    assert integrate(Field.from_function(line, lambda x: 1.0 + 2.0 * x)) == pytest.approx(2.0)
    assert integrate(Field.from_function(square_grid, lambda x, y: x * y)) == pytest.approx(0.25)


def test_lp_norm_of_constant():
    grid = Grid.rectangle(2.0, 1.5, 11, 9)
    assert lp_norm(Field.constant(grid, 2.0), 3.0) == pytest.approx(2.0 * 3.0 ** (1.0 / 3.0))


def test_quadrature_weights_sum_to_volume():
    grid = Grid.rectangle(2.0, 1.5, 11, 9)
    hx, hy = grid.spacing
    assert float(np.sum(quadrature_weights(grid))) * hx * hy == pytest.approx(grid.volume)
