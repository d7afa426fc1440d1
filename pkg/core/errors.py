"""
Exception hierarchy shared by the core modules, the store service and the CLI.
"""

from typing import Optional


class ReadingDataError(Exception):
    """Base class for all ReadingTrace errors."""


class ValidationError(ReadingDataError, ValueError):
    """Invalid input; `field` names the offending field when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class GeometryError(ValidationError):
    """Invalid geometric argument (page mix, non-positive sizes, angles)."""


class UrlError(ValidationError):
    """Malformed peyedf:// URL."""


class NotFoundError(ReadingDataError, LookupError):
    """A referenced record, session or document does not exist."""


class ConflictError(ReadingDataError):
    """An operation would break referential integrity."""


class AuthenticationError(ReadingDataError):
    """Missing or wrong credentials."""


class SessionClosedError(ReadingDataError):
    """The reading session was already closed."""


class StreamError(ReadingDataError):
    """A fixation stream delivered unreadable data."""


class ClassifierError(ReadingDataError):
    """Classifier training cannot proceed (e.g. single-class labels)."""
