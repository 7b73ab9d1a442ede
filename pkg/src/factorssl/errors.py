"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage/configuration/ingestion/input
problems exit 2, failed checks exit 1.
"""


class FactorsslError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FactorsslError):
    """Invalid or inconsistent configuration values."""


class InputError(FactorsslError):
    """Malformed numeric input (wrong shape, NaN/Inf, out of range)."""


class UsageError(FactorsslError):
    """An operation was called in a way its contract forbids."""


class IngestionError(FactorsslError):
    """A data file could not be parsed; message names the offending row/column."""


class TrainingError(FactorsslError):
    """Training diverged or produced non-finite values."""
