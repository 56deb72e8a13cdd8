#!/usr/bin/env python3
"""dsmlab command-line entry point.

Commands: simulate, envelope, verify, sweep, audit, constants.
Exit status: 0 all gated checks pass, 1 a gated check failed,
2 configuration or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from common.env_utils import env_int, load_dotenv_checked
from common.logging_utils import configure_logging, log_event
from runner.config import load_config
from runner.pipeline import COMMANDS, EXIT_ERROR
from runner.sweep import cmd_sweep, parse_grid_args
from solver.errors import LabError

logger = logging.getLogger(__name__)

WORKERS_ENV = "DSMLAB_WORKERS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsmlab",
        description="Chemotaxis with density-suppressed motility: simulate, bound and verify.",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: DSMLAB_LOG_LEVEL or INFO).")
    parser.add_argument("--env-file", default=None, help="Runtime settings file (default: ./.env).")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("simulate", "Run the PDE and write trajectory CSVs."),
        ("envelope", "Integrate the comparison envelope and write envelope.csv."),
        ("verify", "Run every check and write report.json / report.txt."),
        ("audit", "Audit the motility hypotheses only."),
        ("constants", "Estimate the domain constants only."),
        ("sweep", "Run a command over a parameter grid."),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="Run configuration (KEY=value document).")
        cmd.add_argument("--out", default=None, help="Output directory (overrides RUN_OUT).")
        cmd.add_argument("--seed", type=int, default=None, help="Seed (overrides RUN_SEED).")
        cmd.add_argument("--workers", type=int, default=None, help=f"Worker processes (default: {WORKERS_ENV} or 1).")
        if name == "sweep":
            cmd.add_argument(
                "--grid",
                action="append",
                default=[],
                metavar="KEY=v1,v2",
                help="Swept key and its values; repeat for a cartesian grid.",
            )
            cmd.add_argument("--command", dest="sweep_command", default="verify", choices=sorted(COMMANDS))
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    if args.out is not None:
        out["RUN_OUT"] = args.out
    if args.seed is not None:
        out["RUN_SEED"] = str(args.seed)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        load_dotenv_checked(args.env_file)
        configure_logging(args.log_level)
        workers = args.workers if args.workers is not None else env_int(WORKERS_ENV, 1)
        overrides = _overrides(args)

        if args.command == "sweep":
            text = Path(args.config).read_text(encoding="utf-8")
            base_cfg = load_config(args.config, overrides=overrides)
            grid = parse_grid_args(args.grid)
            exit_code, _ = cmd_sweep(
                text,
                grid,
                Path(base_cfg.out),
                command=args.sweep_command,
                workers=max(1, workers),
                base_overrides={k: v for k, v in overrides.items() if k != "RUN_OUT"},
            )
            return exit_code

        cfg = load_config(args.config, overrides=overrides)
        result = COMMANDS[args.command](cfg)
        if result.report is not None:
            sys.stdout.write(result.report.to_text())
        if result.error:
            log_event(logger, "command_failed", level=logging.ERROR, command=args.command, error=result.error)
        return result.exit_code
    except (LabError, OSError, RuntimeError) as exc:
        action = getattr(exc, "action", None)
        log_event(
            logger,
            "command_failed",
            level=logging.ERROR,
            command=args.command,
            error=str(exc),
            action=action,
        )
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
