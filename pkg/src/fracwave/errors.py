"""Exception hierarchy shared by all modules."""


class FracwaveError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(FracwaveError, ValueError):
    """A scalar parameter (order, exponent, time) is out of its allowed range."""


class InputDomainError(FracwaveError, ValueError):
    """Input samples are non-finite or otherwise unusable."""


class UnsupportedDomainError(FracwaveError, ValueError):
    """Argument lies outside the supported evaluation domain."""


class GridTooCoarseError(FracwaveError, ValueError):
    pass


class ShapeError(FracwaveError, ValueError):
    pass


class OutOfRangeError(FracwaveError, ValueError):
    """Query point falls outside a tabulated box."""


class DomainTooSmallError(FracwaveError, ValueError):
    """Periodic box too small for the kernel tail; carries a suggested size."""

    def __init__(self, message, suggested_L=None):
        super().__init__(message)
        self.suggested_L = suggested_L


class QuadratureInconsistencyError(FracwaveError, ArithmeticError):
    pass


class DegenerateInputError(FracwaveError, ValueError):
    pass
