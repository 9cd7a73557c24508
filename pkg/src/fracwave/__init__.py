"""Time-fractional diffusion-wave equation toolkit.

Numerical solution of ``d_t^alpha u = Laplace u + f`` (``0 < alpha < 2``) on
periodic boxes through the fundamental-solution representation, together
with empirical checks of weighted mixed-norm maximal-regularity estimates.
"""

from fracwave.errors import (
    DegenerateInputError,
    DomainTooSmallError,
    FracwaveError,
    GridTooCoarseError,
    InputDomainError,
    OutOfRangeError,
    ParameterError,
    QuadratureInconsistencyError,
    ShapeError,
    UnsupportedDomainError,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateInputError",
    "DomainTooSmallError",
    "FracwaveError",
    "GridTooCoarseError",
    "InputDomainError",
    "OutOfRangeError",
    "ParameterError",
    "QuadratureInconsistencyError",
    "ShapeError",
    "UnsupportedDomainError",
    "__version__",
]
