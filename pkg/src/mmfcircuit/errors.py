"""Exception types raised across the package."""


class MMFCircuitError(Exception):
    """Base class for all package errors."""


class InvalidDimension(MMFCircuitError, ValueError):
    pass


class InvalidParameter(MMFCircuitError, ValueError):
    pass


class InvalidConfig(MMFCircuitError, ValueError):
    pass


class InvalidDistribution(MMFCircuitError, ValueError):
    pass


class InvalidStream(MMFCircuitError, ValueError):
    pass


class DegenerateTarget(MMFCircuitError, ValueError):
    """Phase-only encoding was asked to realize a zero field."""


class UndefinedVisibility(MMFCircuitError, ZeroDivisionError):
    pass


class UndefinedSimilarity(MMFCircuitError, ZeroDivisionError):
    pass


class UnderdeterminedFit(MMFCircuitError, ArithmeticError):
    pass


class LocalizationFailure(MMFCircuitError, RuntimeError):
    pass


class CalibrationRequired(MMFCircuitError, RuntimeError):
    pass
