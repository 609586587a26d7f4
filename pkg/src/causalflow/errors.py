class NumericalBudgetError(RuntimeError):
    """A quadrature, resolution or tail-mass budget could not be met."""


class ConfigError(ValueError):
    """Invalid experiment configuration or command-line input."""
