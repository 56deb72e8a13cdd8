"""
dsmlab common module

Structured event logging and dotenv / output-directory helpers shared by the
solver, verifier and runner packages.
"""

from .env_utils import OutputDirectoryLock, load_dotenv_checked
from .logging_utils import build_event_log, configure_logging, log_event

__all__ = [
    'OutputDirectoryLock',
    'build_event_log',
    'configure_logging',
    'load_dotenv_checked',
    'log_event',
]

__version__ = '1.0.0'
