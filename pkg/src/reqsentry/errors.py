"""Exception hierarchy shared across the package."""


class ReqSentryError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(ReqSentryError):
    """A configuration value violates a documented constraint."""


class InvalidInputError(ReqSentryError):
    """Caller-supplied data violates an operation precondition."""


class ParseError(ReqSentryError):
    """Malformed textual or binary input.

    ``position`` is a byte/char offset or a line number depending on the
    format; the message says which.
    """

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at {position})")
        self.position = position
