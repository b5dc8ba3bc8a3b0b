"""Exception types shared across the package.

Every error raised on a contract violation is a subclass of AirError so
callers can catch the whole family, and a subclass of ValueError (or
OSError for file-shaped problems) so untyped callers still get sensible
behaviour.
"""

from __future__ import annotations


class AirError(Exception):
    """Base class for all airkit contract violations."""


class ZeroNormError(AirError, ValueError):
    """A vector required to be nonzero has norm below the 1e-12 threshold."""


class DimMismatchError(AirError, ValueError):
    """Operands live in different embedding dimensions."""


class EmptySetError(AirError, ValueError):
    """An operation needs at least one element and got none."""


class ShapeMismatchError(AirError, ValueError):
    """An array has the wrong shape for the operation."""


class LengthMismatchError(AirError, ValueError):
    """Paired sequences differ in length (or are too short to use)."""


class ConstantInputError(AirError, ValueError):
    """Rank correlation is undefined: an input has zero rank variance."""


class InsufficientClassesError(AirError, ValueError):
    """Pair sampling needs at least two eligible classes."""


class BadMagicError(AirError, ValueError):
    """A cache file does not start with the expected magic bytes."""


class TruncatedFileError(AirError, ValueError):
    """A cache file ends before the declared payload is complete."""


class ManifestMismatchError(AirError, ValueError):
    """Cache row count and manifest row count disagree."""


class BadInitError(AirError, ValueError):
    """Prompt initialization tokens are unusable (wrong dim or empty)."""


class RangeError(AirError, ValueError):
    """A scalar parameter is outside its documented range."""


class ZeroImageOffsetError(AirError, ValueError):
    """The mean image offset driving prompt learning is numerically zero."""


class ConfigError(AirError, ValueError):
    """A configuration value or combination is invalid; names the field."""


class ConfigWarning(UserWarning):
    """A configuration is legal but degenerate (e.g. no anchors scheduled)."""


class FrozenStateError(AirError, ValueError):
    """Attempted to mutate a frozen snapshot."""


class NonFiniteLossError(AirError, ValueError):
    """A training loss became NaN or infinite."""


class BadMatrixError(AirError, ValueError):
    """A distance matrix is not square/symmetric/zero-diagonal."""


class KTooLargeError(AirError, ValueError):
    """More clusters requested than points available."""


class NonPSDError(AirError, ValueError):
    """A covariance matrix is not symmetric positive semi-definite."""


class ParseError(AirError, ValueError):
    """A config file or override string could not be parsed."""


class UnknownKeyError(AirError, ValueError):
    """A config file or override names a key the schema does not define."""
