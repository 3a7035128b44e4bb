class DfcError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(DfcError, ValueError):
    """An argument is outside its admissible range."""


class ContractViolation(DfcError, ValueError):
    """An input breaks a structural precondition (orthonormality, symmetry, ...)."""


class ZeroMatrixError(DfcError, ValueError):
    """The operation is undefined for an all-zero matrix."""


class NumericalDivergence(DfcError, ArithmeticError):
    """An iterative solver produced non-finite values."""

    def __init__(self, message: str, block: int | None = None):
        super().__init__(message)
        self.block = block
