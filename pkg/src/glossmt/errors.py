"""Exception hierarchy for the toolkit.

The classes map onto the command-line exit codes: UsageError and its
subclasses exit with 1, DataError and I/O problems with 2, and
EndpointError with 3.
"""

from __future__ import annotations


class GlossmtError(Exception):
    """Base class for all toolkit errors."""


class UsageError(GlossmtError):
    """The caller violated a precondition (bad arguments, misuse of the API)."""


class ConfigurationError(UsageError):
    """A configuration value is invalid or infeasible for the given inputs."""


class DataError(GlossmtError):
    """An input file is broken in a way the caller must fix."""


class AlignmentError(DataError):
    """Parallel inputs that are supposed to line up do not."""


class FormatError(DataError):
    """An input file could not be parsed."""

    def __init__(self, message: str, *, path=None, line: int | None = None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if line is not None:
            detail = f"{detail} (line {line})"
        super().__init__(detail)
        self.path = path
        self.line = line


class TemplateError(DataError):
    """A prompt template is malformed or references an unknown placeholder."""


class MissingCountError(DataError):
    """An external token-count file has no entry for a requested segment."""


class EndpointError(GlossmtError):
    """The inference endpoint failed hard enough to abort a batch.

    ``partial_records`` holds the generation records that completed before
    the abort, in input order, so a partial-results manifest can still be
    written.
    """

    def __init__(self, message: str, partial_records=None):
        super().__init__(message)
        self.partial_records = list(partial_records or [])
