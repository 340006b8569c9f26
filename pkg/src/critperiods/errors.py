"""Exception types shared across the package."""


class CritPeriodsError(Exception):
    """Base class for every error raised by this package."""


class NonFiniteError(CritPeriodsError, ValueError):
    """A matrix or state contains NaN or Inf where finite values are required."""


class DivergenceError(CritPeriodsError, ArithmeticError):
    """Training or integration blew up (non-finite values or runaway loss)."""


class FSingularityError(CritPeriodsError, ArithmeticError):
    """Singular values are (nearly) degenerate or zero, so the coupling matrix diverges."""


class ConfigError(CritPeriodsError, ValueError):
    """An experiment configuration could not be parsed or validated."""
