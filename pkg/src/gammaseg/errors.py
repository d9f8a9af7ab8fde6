"""Exception types shared across the package."""


class GammaSegError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(GammaSegError):
    """Fields that must share a grid or shape do not."""


class DegenerateSetError(GammaSegError):
    """An operation needs a set that is neither empty nor the whole domain."""


class ZeroMeasureError(GammaSegError):
    """An operation is undefined against the zero measure."""


class QuadratureError(GammaSegError):
    """Adaptive quadrature hit its subdivision limit before converging."""


class UnsupportedFormatError(GammaSegError):
    """Input file is not an 8-bit binary PGM/PPM."""


class TruncatedFileError(GammaSegError):
    """Input file ended before its declared pixel payload."""


class SolverError(GammaSegError):
    """Base class for solver failures."""


class CgDivergenceError(SolverError):
    """An inner linear solve hit its iteration cap; carries the residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class NoProgressError(SolverError):
    """The outer loop's step size underflowed without an accepted step."""


class NonStationarityError(SolverError):
    """A relaxation flow failed to reach stationarity within its cap."""
