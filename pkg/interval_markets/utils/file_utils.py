"""
File utility functions for market state, trade logs and simulation configs
"""

import os
import tempfile
from typing import Dict, Iterator, Tuple

from interval_markets.errors import ConfigError, IoError, StateLocked


def ensure_parent_directory(file_path: str) -> None:
    parent = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(parent, exist_ok=True)


def atomic_write_text(file_path: str, content: str) -> None:
    """Write to a temporary file in the same directory, then rename over the target"""
    ensure_parent_directory(file_path)
    directory = os.path.dirname(os.path.abspath(file_path))
    try:
        fd, temp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(content)
                f.flush()
                os.fsync(f.fileno())
            os.replace(temp_path, file_path)
        except BaseException:
            if os.path.exists(temp_path):
                os.remove(temp_path)
            raise
    except OSError as e:
        raise IoError(f"Cannot write {file_path}", str(e))


def append_line(file_path: str, line: str) -> None:
    """Append one line and flush it to disk"""
    ensure_parent_directory(file_path)
    try:
        with open(file_path, "a", encoding="utf-8") as f:
            f.write(line.rstrip("\n") + "\n")
            f.flush()
            os.fsync(f.fileno())
    except OSError as e:
        raise IoError(f"Cannot append to {file_path}", str(e))


def read_text(file_path: str) -> str:
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise IoError(f"Cannot read {file_path}", str(e))


def iter_lines(file_path: str) -> Iterator[Tuple[int, str]]:
    """(line number, text) for every non-blank line; a missing file has none"""
    if not os.path.exists(file_path):
        return
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            for number, line in enumerate(f, start=1):
                if line.strip():
                    yield number, line.rstrip("\n")
    except OSError as e:
        raise IoError(f"Cannot read {file_path}", str(e))


class FileLock:
    """Advisory writer lock: `<path>.lock` created with O_EXCL"""

    def __init__(self, path: str):
        self.path = f"{path}.lock"
        self._held = False

    def acquire(self) -> None:
        ensure_parent_directory(self.path)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StateLocked("State is locked by another writer", self.path)
        except OSError as e:
            raise IoError(f"Cannot create lock {self.path}", str(e))
        with os.fdopen(fd, "w") as f:
            f.write(f"{os.getpid()}\n")
        self._held = True

    def release(self) -> None:
        if self._held:
            try:
                os.remove(self.path)
            except FileNotFoundError:
                pass
            self._held = False

    def __enter__(self) -> "FileLock":
        self.acquire()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.release()


def parse_key_value(text: str) -> Dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment"""
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {number} is not key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("", f"line {number} has an empty key")
        if key in values:
            raise ConfigError(key, f"duplicate key on line {number}")
        values[key] = value
    return values


def read_key_value_file(file_path: str) -> Dict[str, str]:
    return parse_key_value(read_text(file_path))
