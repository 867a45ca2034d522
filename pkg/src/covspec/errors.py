"""Exception types shared across the package.

Two failure families are distinguished so the CLI can map them to exit
codes: bad inputs/configuration (ValidationError, exit 2) and numerical
breakdowns such as rank deficiency or an indefinite spectral matrix
(NumericalError, exit 3).
"""


class CovspecError(Exception):
    """Base class for all package errors."""


class ValidationError(CovspecError):
    """Invalid input data, configuration, or argument domain."""


class NumericalError(CovspecError):
    """Numerical failure: rank deficiency, non-PSD matrix, factorization."""
