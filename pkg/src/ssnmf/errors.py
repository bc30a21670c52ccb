"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Matrix dimensions do not agree."""


class ParameterError(ValueError):
    """A scalar or configuration parameter is outside its valid range."""


class DegenerateInputError(ValueError):
    """Input is well-shaped but numerically degenerate (zero norm, N=1, ...)."""


class NumericalError(ArithmeticError):
    """An iterate became NaN or infinite."""


class CubeFormatError(ValueError):
    """A cube file header or payload is malformed."""
