"""Exception types shared across the package."""


class FootliftError(ValueError):
    """Base class for all package errors."""


class DegenerateInput(FootliftError):
    """A rotation or scale could not be recovered (zero or collinear input)."""


class BehindCamera(FootliftError):
    pass


class EmptyInput(FootliftError):
    pass


class ShapeMismatch(FootliftError):
    pass


class OddHeadDim(FootliftError):
    pass


class LengthMismatch(FootliftError):
    pass


class NoVisibleKeypoints(FootliftError):
    pass


class InsufficientKeypoints(FootliftError):
    pass


class SequenceTooShort(FootliftError):
    pass


class FormatError(FootliftError):
    """A data file does not follow its schema."""


class ConfigError(FootliftError):
    pass
