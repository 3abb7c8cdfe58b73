"""Error hierarchy shared by every module.

Each error carries the process exit code the CLI reports for it: validation
problems exit with 2, everything else with 1.
"""
from typing import Optional


class DvsAttackError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(DvsAttackError):
    """Input data or parameters break a documented invariant."""

    exit_code = 2


class StreamValidationError(ValidationError):
    """An event stream violates one of its invariants.

    Attributes:
        kind: Short name of the violated invariant
        index: Offending event index, or None when not tied to an event
    """

    kind = "Invalid"

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class OutOfBoundsError(StreamValidationError):
    kind = "OutOfBounds"


class UnsortedTimestampsError(StreamValidationError):
    kind = "UnsortedTimestamps"


class BadPolarityError(StreamValidationError):
    kind = "BadPolarity"


class InvalidBinCountError(ValidationError):
    pass


class NegativeMagnitudeError(ValidationError):
    pass


class MalformedTensorError(ValidationError):
    pass


class InvalidParamsError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class EmptyDatasetError(ValidationError):
    pass


class DegenerateSizeError(ValidationError):
    pass


class InvalidBudgetError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class FormatError(DvsAttackError):
    """A binary file could not be decoded."""


class TruncatedFileError(FormatError):
    pass


class BadMagicError(FormatError):
    pass


class MissingModelError(DvsAttackError):
    pass


class MissingDatasetError(DvsAttackError):
    pass


VIOLATION_ERRORS = {
    cls.kind: cls for cls in (OutOfBoundsError, UnsortedTimestampsError, BadPolarityError)
}
