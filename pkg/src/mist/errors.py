"""Exception types shared across the package."""


class MistError(Exception):
    """Base class for all errors raised by mist."""


class ValidationError(MistError, ValueError):
    """Invalid input data, configuration, or arguments."""


class NumericalError(MistError, ArithmeticError):
    """A numerical routine failed (infeasible system, solver divergence)."""
