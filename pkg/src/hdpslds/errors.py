"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid distribution or model parameters."""


class NumericalError(ArithmeticError):
    """A linear-algebra step failed (non-PD matrix, divergence, non-finite value)."""

    def __init__(self, message, condition=None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3g})"
        super().__init__(message)
        self.condition = condition
