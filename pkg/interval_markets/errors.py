"""
Error types for the interval market engines and the CLI
Each error carries the exit code the CLI should return for it
"""

from typing import Optional


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ENGINE = 3
EXIT_IO = 4


class MarketError(Exception):
    """Base error for everything raised by interval_markets"""
    exit_code: int = EXIT_ENGINE

    def __init__(self, message: str, detail: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def __str__(self) -> str:
        if self.detail:
            return f"{self.message} ({self.detail})"
        return self.message


# ---------------- validation (exit 2) -----------------

class ValidationError(MarketError):
    exit_code = EXIT_VALIDATION


class InvalidInterval(ValidationError):
    pass


class EndpointTooFine(ValidationError):
    pass


class NonFiniteShares(ValidationError):
    pass


class PrecisionExceedsSchedule(ValidationError):
    pass


class LevelOutOfRange(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class BadArgs(ValidationError):
    pass


class DegenerateBelief(ValidationError):
    pass


class ConfigError(ValidationError):
    """Bad simulation config; `key` names the offending entry"""

    def __init__(self, key: str, message: str):
        super().__init__(f"Invalid config key '{key}'", message)
        self.key = key


# ---------------- engine (exit 3) -----------------

class EngineError(MarketError):
    exit_code = EXIT_ENGINE


class StructureViolation(EngineError):
    pass


class IncoherentState(EngineError):
    pass


class DegeneratePrice(EngineError):
    pass


# ---------------- persistence (exit 4) -----------------

class PersistenceError(MarketError):
    exit_code = EXIT_IO


class IoError(PersistenceError):
    pass


class SnapshotCorrupt(PersistenceError):
    pass


class StateLocked(PersistenceError):
    pass


class LogCorrupt(PersistenceError):
    """Trade log problem; `seq` is the missing or unreadable record number"""

    def __init__(self, seq: int, message: str):
        super().__init__(f"Trade log corrupt at seq {seq}", message)
        self.seq = seq
