"""Exception hierarchy shared across the package."""


class VSEError(Exception):
    """Base class for every error raised by vsekit."""


class ConfigurationError(VSEError, ValueError):
    """A configuration value or argument shape is invalid."""


class ContractError(VSEError, ValueError):
    """A precondition of an operation was violated."""


class DegenerateInputError(VSEError, ValueError):
    """Input has no usable direction (e.g. a zero vector under normalization)."""


class EmptyBatchError(ContractError):
    pass


class EmptyNegativeSetError(ContractError):
    pass


class DatasetTooSmallError(ContractError):
    pass


class NumericError(VSEError, ArithmeticError):
    """Non-finite values were encountered."""


class FormatError(VSEError):
    """A feature file is malformed.  ``field`` names the offending part."""

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or field)
