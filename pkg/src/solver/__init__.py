"""Numerical core: motility, grid, elliptic solve, time stepping, comparison envelope."""
