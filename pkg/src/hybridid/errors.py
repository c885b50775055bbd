"""Exception hierarchy. The CLI maps each family to an exit code."""


class HybridIdError(Exception):
    pass


class ConfigError(HybridIdError):
    """Invalid configuration or model description (exit code 2)."""


class DataError(HybridIdError):
    """Missing, malformed or inconsistent data (exit code 3)."""


class NumericError(HybridIdError, ArithmeticError):
    """Numerical failure: divergence, singular matrices, non-finite values (exit code 4)."""


class DimensionError(DataError, ValueError):
    pass


class ModelError(ConfigError, ValueError):
    def __init__(self, message, joint=None):
        if joint is not None:
            message = f"joint {joint}: {message}"
        super().__init__(message)
        self.joint = joint
