"""Exception hierarchy.

Every error raised on purpose by this package derives from LfError, so
callers (and the CLI) can distinguish expected failures from bugs.
"""


class LfError(Exception):
    """Base class for all package errors."""


class AngularIndexError(LfError, IndexError):
    """Angular coordinate (u, v) outside the light field's grid."""


class DataError(LfError, ValueError):
    """Invalid numeric data: non-finite values, out-of-range intensities,
    mismatched shapes."""


class FormatError(LfError, ValueError):
    """Malformed or truncated file content."""


class ConfigError(LfError, ValueError):
    """Inconsistent or unknown configuration."""


class SceneError(LfError, ValueError):
    """Invalid synthetic scene description."""


class SamplingError(LfError, RuntimeError):
    """Patch sampling cannot proceed (for example no eligible centers)."""
