"""Exception hierarchy shared by all modules.

The CLI maps each family to an exit code, so every raised error should be an
instance of one of these classes.
"""


class RdmError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(RdmError, ValueError):
    """Argument outside the domain of an operation (site outside box, bad axis...)."""

    exit_code = 2


class PreconditionError(RdmError, ValueError):
    """A mathematical hypothesis required by an operation is violated."""

    exit_code = 2


class NumericError(RdmError, ArithmeticError):
    """An iterative method failed to converge or produced an inconsistent result."""

    exit_code = 3


class ConsistencyError(NumericError):
    """A computed object violates a structural property it must have."""


class RangeError(NumericError):
    """A quantity would leave the representable floating point range."""


class ResourceError(RdmError):
    """Problem size exceeds a configured cap."""

    exit_code = 4
