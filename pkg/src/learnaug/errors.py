"""Exception hierarchy shared by every module."""


class LearnAugError(Exception):
    """Base class for all library errors."""


class DimensionError(LearnAugError, ValueError):
    pass


class ValidationError(LearnAugError, ValueError):
    pass


class ConfigError(LearnAugError, ValueError):
    pass


class ParseError(LearnAugError, ValueError):
    """Malformed input file. Carries the 1-based row and column when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class UnprocessableVariableError(LearnAugError, ValueError):
    pass


class DegenerateWeightingError(LearnAugError, ValueError):
    pass


class ContractError(LearnAugError, ValueError):
    """A precondition on the data (not the arguments) was violated."""


class NumericError(LearnAugError, FloatingPointError):
    """Non-finite values appeared during a computation."""

    def __init__(self, message, step=None, layer=None, context=None):
        super().__init__(message)
        self.step = step
        self.layer = layer
        self.context = context or {}


class InsufficientNegativesError(ValidationError):
    pass
