"""Exceptions shared across the package."""


class EstimatorExhausted(RuntimeError):
    """Raised when a log-of-mean estimate is requested for a series whose
    sample mean is not positive, i.e. the signal is buried in noise and
    -ln<x> is undefined.  Callers should increase statistics or switch to
    the thermodynamic-integration route instead of trusting a NaN."""


class InsufficientData(ValueError):
    """Raised when a series is too short for the requested binning
    (fewer than the minimum number of complete blocks)."""


class DegenerateGroundState(RuntimeError):
    """Raised when a unique ground state was requested but the spectrum
    is degenerate at the bottom within tolerance."""
