"""Exception types shared across the toolkit."""

from __future__ import annotations


class NerkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(NerkitError):
    """A corpus or prediction file could not be parsed.

    Carries the file path and 1-based line number of the offending record.
    """

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class FormatError(NerkitError):
    """A binary embedding file is malformed or inconsistent."""


class EncodeError(NerkitError):
    """Gold mentions cannot be represented in the requested tagging scheme."""


class ConfigError(NerkitError):
    """Invalid configuration or command-line usage."""


class TrainingError(NerkitError):
    """Training failed fast, e.g. on a non-finite loss or gradient."""
