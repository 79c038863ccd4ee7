"""
Exception hierarchy shared by the library and the command-line entrypoint.

Every error carries the process exit code the CLI should return, so callers deep in
the pipeline only decide what went wrong and never how the process terminates.
"""

from __future__ import annotations

from typing import Any


class SgvcError(Exception):
    """Base class for every expected failure raised by this package."""

    exit_code = 1


class ConfigError(SgvcError):
    """Invalid configuration file, override, or parameter combination."""

    exit_code = 2


class ParameterError(ConfigError, ValueError):
    """An operation received parameters outside its documented range."""


class DataError(SgvcError):
    """Input audio, mel caches, or manifests do not satisfy their contracts."""

    exit_code = 3


class EmptyInputError(DataError, ValueError):
    pass


class LengthError(DataError, ValueError):
    pass


class ManifestError(DataError):
    pass


class LabelError(DataError, ValueError):
    pass


class ShapeError(DataError, ValueError):
    pass


class NumericError(SgvcError):
    """A loss or metric became non-finite."""

    exit_code = 4

    def __init__(self, component: str, message: str, report: dict[str, Any] | None = None) -> None:
        super().__init__(f"{component}: {message}")
        self.component = component
        self.report = report or {}


class StorageError(SgvcError):
    """Checkpoint or cache files cannot be used."""

    exit_code = 5


class SchemaError(StorageError):
    pass


class IntegrityError(StorageError):
    pass


def exit_code_for(error: BaseException) -> int:
    """Map any exception to the CLI exit status."""
    if isinstance(error, SgvcError):
        return error.exit_code
    if isinstance(error, OSError):
        return StorageError.exit_code
    return 1
