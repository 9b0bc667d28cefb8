"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is out of its documented domain."""


class ShapeError(ValueError):
    """Array arguments disagree in shape or rank."""


class LoadError(ValueError):
    """A dataset file or schema could not be parsed."""


class NumericError(ArithmeticError):
    """An iterative numeric routine failed to converge."""
