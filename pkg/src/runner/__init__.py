"""Batch front-end: configuration, commands, sweeps and artifact writers."""
