"""Monitors, bound curves and reports over solver trajectories."""
