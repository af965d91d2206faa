"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A parameter violates its documented precondition."""


class InvalidDataError(ValueError):
    """Input arrays contain non-finite or out-of-range values."""


class EmptyInputError(InvalidArgumentError):
    """An operation that requires a non-empty input received an empty one."""


class FormatError(Exception):
    """A scene/result file is malformed.

    ``offset`` is the byte offset at which the problem was detected, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = "%s (at byte offset %d)" % (message, offset)
        super().__init__(message)
        self.offset = offset


class GenerationError(RuntimeError):
    """Synthetic scene generation could not satisfy the spec (e.g. packing)."""
