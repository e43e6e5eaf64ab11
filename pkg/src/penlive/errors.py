"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: `DataFormatError` subclasses are data
errors (exit 2), everything else raised past the command handler is a
runtime failure (exit 3).
"""


class PenliveError(Exception):
    """Base class for all toolkit errors."""


class DataFormatError(PenliveError):
    """A file or record violates one of the documented formats."""


class MalformedRecord(DataFormatError):
    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(DataFormatError):
    def __init__(self, sample_id):
        super().__init__(f"duplicate sample id {sample_id!r}")
        self.sample_id = sample_id


class NonMonotonicTime(DataFormatError):
    """Timestamps decrease within a stroke after duplicate removal."""


class IoFailure(PenliveError):
    """Wraps an OS-level read/write failure."""


# kinematic model
class EmptyModel(PenliveError):
    """A movement plan has no strokes to synthesize."""


class TooShort(PenliveError):
    """Too few points for the requested operation."""


class FitFailure(PenliveError):
    """No lognormal stroke could be fit to any speed peak."""


class ClampExhausted(PenliveError):
    """Resampling never produced a positive value for a clamped parameter."""


class LengthMismatch(PenliveError):
    pass


class DomainError(PenliveError):
    """An argument lies outside a function's mathematical domain."""


# features
class ZeroTimeOffset(PenliveError):
    """Consecutive points share a timestamp (should not survive canonicalize)."""


class EvenWindow(PenliveError):
    """Moving-average windows must be odd."""


# dtw
class EmptySequence(PenliveError):
    pass


class EmptyReferenceSet(PenliveError):
    pass


# nn
class ShapeMismatch(PenliveError):
    pass


class EmptySplit(PenliveError):
    """A train or validation split required by the caller is empty."""


# evaluation
class DegenerateSplit(PenliveError):
    """A requested partition received no samples."""


class SingleClass(PenliveError):
    """An operation needs both labels present."""
