"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` and the process
exit code the CLI maps it to (2 = configuration, 3 = data, 4 = numeric).
"""


class AlignError(Exception):
    """Base class for all package errors."""

    code = "error"
    exit_code = 3


class ConfigError(AlignError):
    """Invalid configuration or CLI arguments."""

    code = "config"
    exit_code = 2


class DataError(AlignError):
    """Problems with input files or in-memory data."""

    code = "data"
    exit_code = 3


class BadMagicError(DataError):
    code = "bad_magic"


class UnsupportedVersionError(DataError):
    code = "unsupported_version"


class TruncatedPayloadError(DataError):
    code = "truncated_payload"


class DimensionMismatchError(DataError):
    code = "dimension_mismatch"


class NonFiniteError(DataError):
    code = "non_finite"


class FormatError(DataError):
    """Structurally invalid content (self-loops, unknown labels, ...)."""

    code = "format"


class NumericError(AlignError):
    """Numerical failure inside a solver or evaluator."""

    code = "numeric"
    exit_code = 4
