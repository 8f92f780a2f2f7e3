"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for an operation."""


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


class DomainError(ValueError):
    """Input values fall outside the domain of a loss or metric."""


class UsageError(RuntimeError):
    """An API was called in a way its contract forbids."""


class NonFiniteGradientError(FloatingPointError):
    """A gradient contains NaN or inf during an optimizer step."""

    def __init__(self, name):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.name = name
