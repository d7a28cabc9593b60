"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`KbDemandError` so callers
(and the CLI exit-code mapping) can distinguish our failures from bugs.
Plain I/O problems are left to the builtin ``OSError``.
"""


class KbDemandError(Exception):
    """Base class for all kbdemand errors."""


class EmptyUsageError(KbDemandError):
    """A relation-count mapping had no positive counts to normalize."""


class FormatError(KbDemandError):
    """A file's content does not match the expected format/version."""

    def __init__(self, message, lines=None):
        super().__init__(message)
        self.lines = list(lines) if lines else []


class SchemaError(KbDemandError):
    """A record violates the schema (e.g. entity without classes)."""


class EmptyDatasetError(KbDemandError):
    """Aggregation produced no surviving signature rows."""


class ConfigError(KbDemandError):
    """Invalid configuration or incompatible inputs for an operation."""


class MetricError(KbDemandError):
    """A metric is undefined for the given inputs."""


class DivergenceError(KbDemandError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class UnknownSignatureError(KbDemandError):
    """No member class of a signature is known to the model."""


class UnknownEntityError(KbDemandError):
    """Entity id not present in the KB snapshot."""
