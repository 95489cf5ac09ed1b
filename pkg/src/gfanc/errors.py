"""Exception types raised across the package."""


class GfancError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(GfancError, ValueError):
    """An input violates a documented precondition."""


class NonRealResult(GfancError, ArithmeticError):
    """An inverse DFT left an imaginary residual above tolerance."""


class DivergenceError(GfancError, ArithmeticError):
    """An adaptive filter ran away (step size too large)."""
