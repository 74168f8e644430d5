"""Exception hierarchy shared by every subsystem."""
from __future__ import annotations


class AutocomposeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AutocomposeError):
    """Configuration values are invalid or disagree with the data."""


class ContractError(AutocomposeError, ValueError):
    """A caller violated an operation's preconditions."""


class ParseError(AutocomposeError):
    """A data file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class StorageError(AutocomposeError):
    """A persistence operation failed."""


class DuplicateIdError(AutocomposeError):
    """An identifier that must be unique was reused."""


class RegistrationError(AutocomposeError):
    """A handler registration or removal was rejected."""


class SubmissionError(AutocomposeError):
    """An event could not be queued."""


class InconsistencyError(AutocomposeError):
    """Internal state changed between two steps that assumed it would not."""


class CatalogError(AutocomposeError, KeyError):
    """A price lookup failed."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ProtocolError(AutocomposeError):
    """A wire message is malformed. ``offset`` is the offending byte position."""

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class TransportError(AutocomposeError):
    """The peer could not be reached or did not answer in time."""
