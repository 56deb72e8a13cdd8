"""Event logging for dsmlab: one `event=<name> key=value ...` line per record.

Numbers are rendered compactly (floats with 6 significant digits, numpy
scalars unwrapped) so solver and check events stay on one readable line.
Strings with whitespace, quotes or `=` are quoted.
"""

from __future__ import annotations

import logging
import numbers
import os
from typing import Any, Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL_ENV = "DSMLAB_LOG_LEVEL"
FLOAT_FORMAT = ".6g"


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def _quote(text: str) -> str:
    if not text:
        return '""'
    if any(ch.isspace() for ch in text) or "=" in text or '"' in text:
        return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return text


def build_event_log(event: str, **fields: Any) -> str:
    """event=<name> followed by the non-None fields in key order."""
    rendered = (f"{key}={_quote(_render(fields[key]))}" for key in sorted(fields) if fields[key] is not None)
    return " ".join([f"event={_quote(event)}", *rendered])


def log_event(logger: logging.Logger, event: str, *, level: int = logging.INFO, **fields: Any) -> None:
    if logger.isEnabledFor(level):
        logger.log(level, build_event_log(event, **fields))


def resolve_log_level(level: Optional[str] = None) -> int:
    """Explicit level, else DSMLAB_LOG_LEVEL, else INFO. Unknown names fall back to INFO."""
    name = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").strip().upper()
    resolved = logging.getLevelName(name)
    return resolved if isinstance(resolved, int) else logging.INFO


def configure_logging(level: Optional[str] = None) -> int:
    resolved = resolve_log_level(level)
    logging.basicConfig(level=resolved, format=LOG_FORMAT, force=True)
    return resolved
