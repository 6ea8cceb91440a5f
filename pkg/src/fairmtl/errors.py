"""Exception hierarchy shared across the package."""


class FairMTLError(Exception):
    """Base class for all package errors."""


class ConfigError(FairMTLError, ValueError):
    pass


class ShapeError(FairMTLError, ValueError):
    pass


class CacheError(ShapeError):
    """A forward cache does not match the gradients it is combined with."""


class ContractError(FairMTLError, ValueError):
    pass


class FormatError(FairMTLError, ValueError):
    pass


class ValidationError(FairMTLError, ValueError):
    """A value in an input file violates its column contract."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyEvaluationError(FairMTLError, ValueError):
    pass


class NumericError(FairMTLError, ArithmeticError):
    pass
