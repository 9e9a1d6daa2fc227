"""Exception hierarchy shared by the library and the CLI.

The three concrete classes map onto the CLI exit codes: configuration
problems exit 2, data problems exit 3, numeric failures exit 4.
"""


class MaskpfError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(MaskpfError):
    """Invalid configuration: bad parameter values, mismatched configs."""

    exit_code = 2


class DataError(MaskpfError):
    """Invalid or unusable data: bad shapes, unreadable files, empty sets."""

    exit_code = 3


class NumericError(MaskpfError):
    """Numeric failure during computation (NaN/Inf where finite required)."""

    exit_code = 4
