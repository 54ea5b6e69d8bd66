"""Exception hierarchy for the exporter.

Exit-code mapping follows the screening pipeline convention: usage
problems exit 2, data problems exit 3, backend failures exit 4.
"""


class ExporterError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(ExporterError):
    """Bad flag combination or argument value."""


class DataError(ExporterError):
    """Malformed or inconsistent input data."""


class ModelError(ExporterError):
    """An embedding model or scorer could not be loaded or run at all."""


class ScorerError(ExporterError):
    """A scorer failed on one document's chunks.

    Callers drop the affected row and keep going; this never aborts a
    whole export run.
    """
