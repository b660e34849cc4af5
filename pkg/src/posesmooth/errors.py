"""Exception types shared across the package."""


class PoseSmoothError(Exception):
    """Base class for all package errors."""


class ShapeError(PoseSmoothError, ValueError):
    pass


class NumericError(PoseSmoothError, ArithmeticError):
    pass


class SingularMatrixError(NumericError):
    pass


class ConfigError(PoseSmoothError, ValueError):
    pass


class LayoutError(ConfigError):
    pass


class ParseError(PoseSmoothError, ValueError):
    pass


class AlignmentError(NumericError):
    """Raised when a frame cannot be Procrustes-aligned (coincident joints)."""


class TrainingDiverged(NumericError):
    """Loss went non-finite; ``checkpoint`` holds the last good weights."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
