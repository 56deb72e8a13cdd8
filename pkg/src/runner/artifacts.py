"""
CSV and JSON writers for run outputs.

Floats are written with 17 significant digits and nothing time-dependent is
recorded, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from solver.comparison import DecayBound, EnvelopeTrajectory
from solver.pde import Trajectory
from verifier.lp_bound import LpBoundCurve

TIMESERIES_CSV = "timeseries.csv"
SNAPSHOT_DIR = "snapshots"
METADATA_JSON = "metadata.json"
CONFIG_ECHO = "config.env"

TIMESERIES_COLUMNS = (
    "t",
    "mass",
    "min_u",
    "max_u",
    "a_t",
    "sup_dist_u_to_1",
    "sup_dist_v_to_1",
    "dt",
    "l2sq",
    "lp",
)
ENVELOPE_COLUMNS = ("t", "u_lo", "u_hi", "log_gap", "a_used", "bound_paper", "bound_conservative")


def fmt(value: Any) -> str:
    if value is None:
        return ""
    value = float(value)
    if np.isnan(value):
        return ""
    return format(value, ".17g")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _json_default(value: Any):
    if hasattr(value, "item"):
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


def write_timeseries(traj: Trajectory, out_dir: Path) -> Path:
    columns = [traj.series[name] for name in TIMESERIES_COLUMNS]
    return _write_rows(Path(out_dir) / TIMESERIES_CSV, TIMESERIES_COLUMNS, zip(*columns))


def write_snapshots(traj: Trajectory, out_dir: Path) -> list[Path]:
    """One CSV per snapshot with vertex coordinates, u and v in C order."""
    grid = traj.grid
    coords = [c.ravel() for c in grid.coordinates()]
    axis_names = ("x", "y")[: grid.dimension]
    header = (*axis_names, "u", "v")
    paths = []
    for index, snap in enumerate(traj.snapshots):
        rows = zip(*coords, snap.u.values.ravel(), snap.v.values.ravel())
        paths.append(_write_rows(Path(out_dir) / SNAPSHOT_DIR / f"snapshot_{index:05d}.csv", header, rows))
    index_rows = ((i, s.t) for i, s in enumerate(traj.snapshots))
    _write_rows(Path(out_dir) / SNAPSHOT_DIR / "index.csv", ("index", "t"), index_rows)
    return paths


def write_envelope(
    env: EnvelopeTrajectory, path: Path, bounds: Optional[DecayBound] = None
) -> Path:
    n = env.times.size
    printed = bounds.printed if bounds is not None else [None] * n
    conservative = bounds.conservative if bounds is not None else [None] * n
    rows = zip(env.times, env.lo, env.hi, env.log_gap, env.a_used, printed, conservative)
    return _write_rows(Path(path), ENVELOPE_COLUMNS, rows)


def write_lp_curve(curve: LpBoundCurve, path: Path) -> Path:
    return _write_rows(Path(path), ("t", "y"), zip(curve.times, curve.y))


def trajectory_metadata(traj: Trajectory) -> dict:
    return {
        "grid": traj.grid.describe(),
        "motility": traj.gamma.describe(),
        "mu": traj.mu,
        "scheme": traj.cfg.describe(),
        "steps": traj.steps,
        "snapshots": len(traj.snapshots),
        "completed": traj.completed,
        "blow_up_time": traj.blow_up_time,
        "final_time": traj.final.t,
    }


def write_trajectory(traj: Trajectory, out_dir: Path) -> None:
    write_timeseries(traj, out_dir)
    write_snapshots(traj, out_dir)
