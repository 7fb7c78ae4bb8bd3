"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1 (bad flags or
configuration), DataError -> 2 (malformed or inconsistent input data),
anything else -> 3.
"""


class MisinfoError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MisinfoError):
    """Invalid configuration: bad hyperparameter, unknown option, bad preset."""


class DataError(MisinfoError):
    """Malformed input data or inconsistent model/data combination."""
