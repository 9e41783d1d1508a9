"""Exception hierarchy shared by every hermein module."""


class HermeinError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(HermeinError, ValueError):
    pass


class UnsupportedBundleError(HermeinError, ValueError):
    """A twisted summand has negative degree, so E_n is not generated by sections."""


class InsufficientQuadratureError(HermeinError, ValueError):
    pass


class ConditioningError(HermeinError, ArithmeticError):
    """A matrix that must be Hermitian positive-definite is not (numerically)."""


class BasePointError(HermeinError, ArithmeticError):
    """The evaluation map is rank-deficient at a point."""


class NumericDomainError(HermeinError, ArithmeticError):
    pass


class DivergenceError(HermeinError, ArithmeticError):
    pass


class StallError(HermeinError, ArithmeticError):
    """Line search could not find a descent step."""
