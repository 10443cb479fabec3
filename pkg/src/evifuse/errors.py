"""Exception hierarchy. The CLI maps these onto its exit codes."""


class EvifuseError(Exception):
    """Base class for all library errors."""


class DomainError(EvifuseError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DimensionError(EvifuseError, ValueError):
    """Vectors or matrices with incompatible shapes."""


class SimplexError(EvifuseError, ValueError):
    """A probability vector that does not lie on the unit simplex."""


class DataError(EvifuseError, ValueError):
    """Malformed or inconsistent input data (CSV files, labels, datasets)."""


class ConfigError(EvifuseError, ValueError):
    """Unknown or invalid configuration keys and values."""


class NumericalError(EvifuseError, ArithmeticError):
    """Non-finite values produced during training or evaluation."""
