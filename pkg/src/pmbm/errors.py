"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model or filter was built from inconsistent shapes or parameters."""


class NumericalError(ArithmeticError):
    """A numerical operation left its valid domain (singular covariance, ...)."""


class SizeLimitError(ValueError):
    """A combinatorial routine was asked for more work than its guard allows."""
