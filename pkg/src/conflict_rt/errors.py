"""Exception types raised across the package.

Data/format problems (bad CSV, bad spec files) and numeric/contract
problems (degenerate fits, invalid arguments) are kept as distinct
subtrees so callers, in particular the CLI, can map them to different
exit codes.
"""


class ConflictRtError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ConflictRtError):
    """A problem with input data or files."""


class NumericError(ConflictRtError):
    """A problem with numeric preconditions or degenerate computations."""


# trace ingestion / validation

class MissingColumn(DataError):
    pass


class NonMonotonicTime(DataError):
    pass


class NaNValue(DataError):
    pass


class EmptyTrace(DataError):
    pass


# looming

class NegativeWidth(NumericError):
    pass


class NonPositiveRange(NumericError):
    pass


class TooShort(NumericError):
    pass


# scenario generation

class SpecInvalid(DataError):
    pass


# annotation

class NoConflictDetected(NumericError):
    pass


class ScenarioUnknown(DataError):
    pass


class WindowTooShort(NumericError):
    pass


class NonPositiveDistance(NumericError):
    pass


# response model

class DegenerateDesign(NumericError):
    pass


class NegativeRut(NumericError):
    pass


class LengthMismatch(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


# belief / accumulator

class OutOfSpan(NumericError):
    pass


class ObservableUnavailable(DataError):
    pass


class EmptySeries(NumericError):
    pass
