"""Exception hierarchy shared across the package."""


class IapasError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(IapasError):
    """A configuration value violates its contract."""


class SchemaError(IapasError):
    """A backend response does not match the wire schema.

    The message names the offending field.
    """


class FixtureMissError(IapasError):
    """The replay store has no fixture for a request key."""


class BackendUnavailableError(IapasError):
    """The backend could not be reached or failed server-side."""


class DatasetError(IapasError):
    """A dataset layout or manifest problem."""


class CodecError(IapasError):
    """A score-map file is malformed."""


class MetricsError(IapasError):
    """Evaluation is undefined for the given pixel pool."""
