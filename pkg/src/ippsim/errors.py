"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 1,
runtime/numerical problems with 2.
"""


class IppError(Exception):
    """Base class for all package errors."""


class ConfigurationError(IppError):
    """Invalid parameters, mismatched kinds, or an inconsistent config."""


class IngestionError(IppError):
    """A raster file could not be read or has an unsupported layout."""


class NumericalError(IppError):
    """A linear-algebra operation failed (singular or non-PD matrix)."""


class MetricError(IppError):
    """A metric was requested on degenerate input (e.g. empty mask)."""
