"""Exception hierarchy shared by all modules."""


class CsklError(Exception):
    """Base class for every error raised by cskl."""


class DimensionMismatch(CsklError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class KindMismatch(CsklError, ValueError):
    pass


class SingularCovariance(CsklError, ValueError):
    pass


class EmptyAccumulator(CsklError, ValueError):
    pass


class InvalidSize(CsklError, ValueError):
    pass


class InvalidDims(CsklError, ValueError):
    pass


class VeroneseOverflow(CsklError, OverflowError):
    pass


class FingerprintMismatch(CsklError, ValueError):
    pass


class SingularProduct(CsklError, ValueError):
    pass


class InsufficientPoints(CsklError, ValueError):
    pass


class DegenerateSpectrum(CsklError, UserWarning):
    """Warning category: a rank threshold fell between near-tied eigenvalues."""


class NoTransition(CsklError, RuntimeError):
    pass


class FormatError(CsklError, ValueError):
    pass


class NoConvergence(CsklError, RuntimeError):
    """Raised by strict decoders; ``result`` holds the best iterate found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
