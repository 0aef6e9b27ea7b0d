"""Exception types raised across the package."""


class RecoilFreeError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(RecoilFreeError, ValueError):
    pass


class InvalidParameterError(RecoilFreeError, ValueError):
    pass


class DomainError(RecoilFreeError, ValueError):
    pass


class DegenerateParametersError(RecoilFreeError, ValueError):
    pass


class InconsistentStateError(RecoilFreeError, ValueError):
    pass


class NumericalConsistencyError(RecoilFreeError, ArithmeticError):
    pass


class TruncationError(RecoilFreeError, RuntimeError):
    """Fock cutoff too small: population reached the top levels."""
