"""Shared dotenv scanning, runtime settings and output-directory lock helpers."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from dotenv import load_dotenv

_DOTENV_KEY_RE = re.compile(r"^(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=")

LOCK_FILE_NAME = ".dsmlab.lock"


@dataclass(frozen=True)
class DuplicateEnvKey:
    """Represents one duplicated key and the line numbers where it appears."""

    key: str
    lines: tuple[int, ...]


@dataclass(frozen=True)
class MalformedLine:
    line: int
    text: str


def iter_key_lines(lines: Iterable[str]) -> Iterable[tuple[int, str | None, str]]:
    """Yield (line_number, key or None, stripped text) for every non-blank, non-comment line."""
    for line_number, raw_line in enumerate(lines, start=1):
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = _DOTENV_KEY_RE.match(stripped)
        yield line_number, (match.group(1) if match else None), stripped


def scan_text(text: str) -> tuple[dict[str, list[int]], list[MalformedLine]]:
    """Map each declared key to its line numbers and collect lines that are not KEY=value."""
    seen: dict[str, list[int]] = {}
    malformed: list[MalformedLine] = []
    for line_number, key, stripped in iter_key_lines(text.splitlines()):
        if key is None:
            malformed.append(MalformedLine(line_number, stripped))
        else:
            seen.setdefault(key, []).append(line_number)
    return seen, malformed


def duplicates_from(seen: Mapping[str, list[int]]) -> list[DuplicateEnvKey]:
    return [DuplicateEnvKey(key=key, lines=tuple(lines)) for key, lines in sorted(seen.items()) if len(lines) > 1]


def find_duplicate_env_keys(dotenv_path: str | os.PathLike[str]) -> list[DuplicateEnvKey]:
    """Find duplicate key declarations in a dotenv file."""
    path = Path(dotenv_path)
    if not path.exists():
        return []
    seen, _ = scan_text(path.read_text(encoding="utf-8"))
    return duplicates_from(seen)


def describe_duplicates(duplicates: Iterable[DuplicateEnvKey]) -> str:
    return ", ".join(f"{item.key} (lines {', '.join(str(v) for v in item.lines)})" for item in duplicates)


def ensure_no_duplicate_env_keys(dotenv_path: str | os.PathLike[str]) -> None:
    """Raise a runtime error with key names and line numbers if duplicates exist."""
    path = Path(dotenv_path)
    duplicates = find_duplicate_env_keys(path)
    if duplicates:
        raise RuntimeError(f"Duplicate keys found in {path}: {describe_duplicates(duplicates)}")


def load_dotenv_checked(
    dotenv_path: str | os.PathLike[str] | None = None,
    *,
    override: bool = False,
) -> bool:
    """Load dotenv after duplicate-key validation. A missing file is not an error."""
    path = Path(dotenv_path) if dotenv_path is not None else Path.cwd() / ".env"
    if not path.exists():
        return False
    ensure_no_duplicate_env_keys(path)
    return load_dotenv(path, override=override)


def env_int(name: str, default: int, *, env: Mapping[str, str] | None = None, minimum: int = 1) -> int:
    """Integer runtime setting with a floor; blank or missing values give the default."""
    source = os.environ if env is None else env
    raw = str(source.get(name, "")).strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise RuntimeError(f"{name} must be an integer, got {raw!r}") from exc
    if value < minimum:
        raise RuntimeError(f"{name} must be >= {minimum}, got {value}")
    return value


class OutputDirectoryLock:
    """Exclusive lock on an output directory held for the duration of a run."""

    def __init__(self, directory: str | os.PathLike[str]):
        self.directory = Path(directory)
        self.path = self.directory / LOCK_FILE_NAME
        self._handle = None

    @property
    def held(self) -> bool:
        return self._handle is not None

    def acquire(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("a+", encoding="utf-8")

        try:
            if os.name == "nt":
                import msvcrt

                self._handle.seek(0)
                self._handle.write("1")
                self._handle.flush()
                msvcrt.locking(self._handle.fileno(), msvcrt.LK_NBLCK, 1)
            else:
                import fcntl

                fcntl.flock(self._handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            self.release(remove=False)
            raise RuntimeError(f"Output directory is in use by another run: {self.directory}") from exc

    def release(self, *, remove: bool = True) -> None:
        if self._handle is None:
            return

        try:
            if os.name == "nt":
                import msvcrt

                self._handle.seek(0)
                msvcrt.locking(self._handle.fileno(), msvcrt.LK_UNLCK, 1)
            else:
                import fcntl

                fcntl.flock(self._handle.fileno(), fcntl.LOCK_UN)
        except OSError:
            pass
        finally:
            self._handle.close()
            self._handle = None
        if remove:
            self.path.unlink(missing_ok=True)

    def __enter__(self) -> "OutputDirectoryLock":
        self.acquire()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.release()
