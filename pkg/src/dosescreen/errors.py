"""Exception hierarchy shared across the pipeline.

The CLI maps these onto process exit codes: usage problems exit 2, data
problems exit 3, training failures exit 4.
"""


class DoseScreenError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(DoseScreenError):
    """Bad flag combination or argument value."""


class DataError(DoseScreenError):
    """Malformed or inconsistent input data."""


class TrainingError(DoseScreenError):
    """Model training could not proceed or failed mid-run."""
