"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message text.
"""


class PoseidonError(Exception):
    """Base class for package errors."""


class InvalidInputError(PoseidonError, ValueError):
    """An argument violates an operation's precondition."""


class SchemaError(PoseidonError):
    """A catalog file is missing mandatory columns."""


class ConfigError(PoseidonError):
    """A config file or config value could not be interpreted."""


class EstimationError(PoseidonError):
    """An estimator received degenerate or insufficient data."""


class NumericalError(PoseidonError):
    """A non-finite value appeared where a finite one is required."""
