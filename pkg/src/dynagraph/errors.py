"""Exception types shared across the package."""


class DynagraphError(Exception):
    """Base class for every error this package raises deliberately."""


class ShapeError(DynagraphError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(DynagraphError, ValueError):
    """A documented precondition of an operation was violated."""


class ValidationError(DynagraphError, ValueError):
    """Input data failed a consistency check."""


class ParseError(ValidationError):
    """A file could not be parsed; the message carries file/line context."""
