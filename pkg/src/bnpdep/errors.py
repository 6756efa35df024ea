"""Exception hierarchy shared by every module."""


class BnpDepError(Exception):
    """Base class for all package errors."""


class ContractViolation(BnpDepError, ValueError):
    """An argument broke a documented precondition."""


class DataError(BnpDepError, ValueError):
    """Input data cannot be used (malformed, degenerate, tied...)."""


class DegenerateColumn(DataError):
    """A column is constant, so ranks or scales are undefined."""


class TiesUnsupported(DataError):
    """The statistic requires tie-free input."""


class NotSpd(BnpDepError, ValueError):
    """Matrix is not symmetric positive definite."""


class InvalidDegreesOfFreedom(ContractViolation):
    pass


class UndefinedKappa(BnpDepError, ValueError):
    """Chance agreement equals one, so kappa has a zero denominator."""


class RetryableNumericalError(BnpDepError, ArithmeticError):
    """A single parameter draw failed numerically; the caller may re-draw."""


class ChainAbort(BnpDepError, RuntimeError):
    """A Markov chain hit repeated numerical failures and was stopped."""
