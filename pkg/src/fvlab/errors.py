"""Exception types raised across the package."""


class FVLabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FVLabError, ValueError):
    pass


class DegreeExceedsPopulation(FVLabError, ValueError):
    """A without-replacement moment of degree n was requested with n > N."""


class DegreeCapExceeded(FVLabError, RuntimeError):
    """A selection birth would push the dual degree past the configured cap."""


class MonotonicityViolation(FVLabError, AssertionError):
    """A dual jump increased the sup-norm of the test function."""


class InvalidRateMatrix(FVLabError, ValueError):
    pass


class ReducibleChain(FVLabError, ValueError):
    """The environment chain is not irreducible, so it has no unique stationary law."""


class EnvironmentRangeError(FVLabError, ValueError):
    """A time outside the valid range of an environment path was queried."""


class ConfigError(FVLabError, ValueError):
    pass
