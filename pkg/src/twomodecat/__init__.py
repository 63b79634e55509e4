"""Reservoir-engineered two-mode cat states in a cavity pumped by an atom beam."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    InvalidArgumentError,
    NumericError,
    ParseError,
    StabilityError,
    TruncationError,
    TwoModeCatError,
    ValidationError,
)
