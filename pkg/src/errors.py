"""Exception hierarchy shared by every maskcons module.

Each exception also derives from the closest builtin so callers that only
know about ValueError / ArithmeticError / RuntimeError still catch them.
"""


class MaskConsError(Exception):
    """Base class for all maskcons errors."""


class ShapeError(MaskConsError, ValueError):
    """Shape or extent mismatch, bad axis, window larger than the image."""


class NonFiniteError(MaskConsError, ArithmeticError):
    """NaN or Inf where finite values are required."""


class DivergenceError(NonFiniteError):
    """Training produced a non-finite loss."""


class StaleTapeError(MaskConsError, RuntimeError):
    """Backward called with a tape recorded against older parameters."""


class ZeroGradientError(MaskConsError, ArithmeticError):
    """Adversarial direction requested where the gradient vanishes."""


class SamplingError(MaskConsError, RuntimeError):
    """Random construction impossible or rejection sampling exhausted."""


class ConfigError(MaskConsError, ValueError):
    """Unknown flag or key, unreadable config file, invalid parameter range."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key


class DataError(MaskConsError, ValueError):
    """Malformed raster, corpus or label data."""
