"""Exception types raised across the package."""


class RidgeConfError(Exception):
    """Base class for all package errors."""


class UnsupportedOrderError(RidgeConfError, ValueError):
    """Requested derivative order exceeds what the kernel or model supports."""


class DegenerateFrameError(RidgeConfError, ValueError):
    """Eigenvalues needed for a ridge statistic are (numerically) repeated."""


class SingularMatrixError(RidgeConfError, ValueError):
    """A matrix that must be positive definite is not."""


class EmptyRidgeError(RidgeConfError, ValueError):
    """An operation needs ridge points but none are available."""


class InputFormatError(RidgeConfError, ValueError):
    """A model, sample, or grid file could not be parsed."""
