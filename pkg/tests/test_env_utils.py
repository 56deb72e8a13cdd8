"""Tests for shared environment utility helpers."""

from pathlib import Path

import pytest

from common.env_utils import (
    LOCK_FILE_NAME,
    OutputDirectoryLock,
    ensure_no_duplicate_env_keys,
    env_int,
    find_duplicate_env_keys,
    load_dotenv_checked,
    scan_text,
)


def test_find_duplicate_env_keys_reports_key_and_lines(tmp_path: Path):
    env_path = tmp_path / ".env"
    env_path.write_text(
        "\n".join(
            [
                "DSMLAB_WORKERS=2",
                "DSMLAB_LOG_LEVEL=INFO",
                "DSMLAB_WORKERS=4",
                "OTHER=value",
                "DSMLAB_LOG_LEVEL=DEBUG",
            ]
        ),
        encoding="utf-8",
    )

    duplicates = find_duplicate_env_keys(env_path)
    as_map = {item.key: item.lines for item in duplicates}
    assert as_map["DSMLAB_WORKERS"] == (1, 3)
    assert as_map["DSMLAB_LOG_LEVEL"] == (2, 5)


def test_ensure_no_duplicate_env_keys_raises(tmp_path: Path):
    env_path = tmp_path / ".env"
    env_path.write_text("A=1\nA=2\n", encoding="utf-8")

    with pytest.raises(RuntimeError) as exc:
        ensure_no_duplicate_env_keys(env_path)

    assert "A (lines 1, 2)" in str(exc.value)


def test_scan_text_skips_comments_and_flags_malformed_lines():
    seen, malformed = scan_text("# header\n\nMU=1.0\nexport GRID_CELLS=41\nnot a pair\n")
    assert seen == {"MU": [3], "GRID_CELLS": [4]}
    assert [(m.line, m.text) for m in malformed] == [(5, "not a pair")]


def test_load_dotenv_checked_missing_file_is_not_an_error(tmp_path: Path):
    assert load_dotenv_checked(tmp_path / "absent.env") is False


def test_load_dotenv_checked_loads_values(tmp_path: Path, monkeypatch):
    monkeypatch.delenv("DSMLAB_TEST_VALUE", raising=False)
    env_path = tmp_path / ".env"
    env_path.write_text("DSMLAB_TEST_VALUE=7\n", encoding="utf-8")
    assert load_dotenv_checked(env_path) is True
    assert env_int("DSMLAB_TEST_VALUE", 1) == 7
    monkeypatch.delenv("DSMLAB_TEST_VALUE", raising=False)


def test_env_int_defaults_and_validation():
    assert env_int("WORKERS", 3, env={}) == 3
    assert env_int("WORKERS", 3, env={"WORKERS": "  "}) == 3
    assert env_int("WORKERS", 3, env={"WORKERS": "5"}) == 5
    with pytest.raises(RuntimeError):
        env_int("WORKERS", 3, env={"WORKERS": "many"})
    with pytest.raises(RuntimeError):
        env_int("WORKERS", 3, env={"WORKERS": "0"})


def test_output_directory_lock_acquire_release(tmp_path: Path):
    out_dir = tmp_path / "runs" / "a"
    lock = OutputDirectoryLock(out_dir)
    lock.acquire()
    assert lock.held
    assert (out_dir / LOCK_FILE_NAME).exists()
    lock.release()
    assert not lock.held
    assert not (out_dir / LOCK_FILE_NAME).exists()


def test_output_directory_lock_is_exclusive(tmp_path: Path):
    with OutputDirectoryLock(tmp_path):
        with pytest.raises(RuntimeError):
            OutputDirectoryLock(tmp_path).acquire()
    with OutputDirectoryLock(tmp_path) as again:
        assert again.held
