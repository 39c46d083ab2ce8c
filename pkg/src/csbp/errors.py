"""Exception types shared across the package.

The CLI maps ConfigurationError to exit code 2 and InstabilityError to
exit code 3; everything else is a plain bug.
"""


class CsbpError(Exception):
    """Base class for package errors."""


class ConfigurationError(CsbpError, ValueError):
    """Invalid parameters, options, or inputs."""


class InstabilityError(CsbpError, ArithmeticError):
    """Numerical refusal: the inversion would need an aliasing parameter
    beyond the configured cap (transform singularities too far right,
    typically a stability index too close to 1)."""


class DegenerateConditioningError(CsbpError, ValueError):
    """Conditioning on survival when the survival event has vanishing
    probability."""
