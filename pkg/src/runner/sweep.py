"""Parameter sweeps: one output directory per point of a KEY=v1,v2 grid."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from common.logging_utils import log_event
from runner import artifacts
from runner.config import KEY_TABLE, parse_config
from runner.pipeline import COMMANDS, EXIT_ERROR
from solver.errors import ConfigurationError, LabError

logger = logging.getLogger(__name__)

SWEEP_SUMMARY = "sweep_summary.json"
_KNOWN_KEYS = {key for key, _, _, _ in KEY_TABLE}


@dataclass(frozen=True)
class SweepPoint:
    overrides: Tuple[Tuple[str, str], ...]
    out_dir: str

    @property
    def label(self) -> str:
        return "_".join(f"{key.lower()}={value}" for key, value in self.overrides)


@dataclass(frozen=True)
class SweepOutcome:
    point: SweepPoint
    exit_code: int
    verdict: Optional[str] = None
    error: Optional[str] = None


def parse_grid_args(items: Sequence[str]) -> Dict[str, List[str]]:
    """['MU=0.1,0.5', 'MOTILITY_ALPHA=0.1'] -> {'MU': ['0.1', '0.5'], ...}."""
    grid: Dict[str, List[str]] = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"Sweep grid entries must look like KEY=v1,v2; got {item!r}")
        if key not in _KNOWN_KEYS:
            raise ConfigurationError(f"Unknown sweep key {key}")
        if key in ("RUN_OUT",):
            raise ConfigurationError("RUN_OUT cannot be swept; each point gets its own directory")
        values = [v.strip() for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigurationError(f"Sweep key {key} has no values")
        grid[key] = values
    if not grid:
        raise ConfigurationError("Sweep needs at least one --grid KEY=v1,v2 entry")
    return grid


def expand_points(grid: Mapping[str, Sequence[str]], base_out: Path) -> List[SweepPoint]:
    keys = list(grid)
    points = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = tuple(zip(keys, combo))
        label = "_".join(f"{key.lower()}={value}" for key, value in overrides)
        points.append(SweepPoint(overrides=overrides, out_dir=str(Path(base_out) / label)))
    return points


def _run_point(text: str, point: SweepPoint, command: str, base_overrides: Tuple[Tuple[str, str], ...]):
    overrides = dict(base_overrides)
    overrides.update(point.overrides)
    overrides["RUN_OUT"] = point.out_dir
    try:
        cfg = parse_config(text, overrides=overrides)
        result = COMMANDS[command](cfg)
    except (LabError, OSError, RuntimeError) as exc:
        return SweepOutcome(point, EXIT_ERROR, error=str(exc))
    verdict = result.report.verdict if result.report is not None else None
    return SweepOutcome(point, result.exit_code, verdict=verdict, error=result.error)


def cmd_sweep(
    text: str,
    grid: Mapping[str, Sequence[str]],
    base_out: Path,
    *,
    command: str = "verify",
    workers: int = 1,
    base_overrides: Optional[Mapping[str, str]] = None,
) -> Tuple[int, List[SweepOutcome]]:
    """Run command at every grid point; returns the worst exit code and per-point outcomes."""
    if command not in COMMANDS:
        raise ConfigurationError(f"Unknown sweep command {command!r}")
    points = expand_points(grid, base_out)
    frozen_overrides = tuple(sorted((base_overrides or {}).items()))
    jobs = [(text, point, command, frozen_overrides) for point in points]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_point, *zip(*jobs)))
    else:
        outcomes = [_run_point(*job) for job in jobs]

    for outcome in outcomes:
        log_event(
            logger,
            "sweep_point_finished",
            point=outcome.point.label,
            exit_code=outcome.exit_code,
            verdict=outcome.verdict,
        )

    exit_code = max(o.exit_code for o in outcomes)
    summary = {
        "command": command,
        "exit_code": exit_code,
        "points": [
            {
                "overrides": dict(o.point.overrides),
                "out_dir": o.point.out_dir,
                "exit_code": o.exit_code,
                "verdict": o.verdict,
                "error": o.error,
            }
            for o in outcomes
        ],
    }
    artifacts.write_json(Path(base_out) / SWEEP_SUMMARY, summary)
    log_event(logger, "sweep_finished", points=len(outcomes), exit_code=exit_code, workers=workers)
    return exit_code, outcomes
