"""Shared exception types."""


class ValidationError(Exception):
    """Bad inputs: malformed files, broken invariants, inconsistent config."""


class NumericalError(RuntimeError):
    """Numerical breakdown: singular systems, non-PD covariances, filter failure."""
