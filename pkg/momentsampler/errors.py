class MomentSamplerError(Exception):
    """Base class for all errors raised by momentsampler."""


class ParameterError(MomentSamplerError, ValueError):
    """A numeric parameter is outside its valid range."""


class ConfigurationError(MomentSamplerError, ValueError):
    """A combination of configuration values cannot be satisfied."""


class MomentIngestionError(MomentSamplerError, ValueError):
    """A raw moment entry is malformed or degenerate."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index
        """Position of the offending entry in the raw list."""


class ImageError(MomentSamplerError, ValueError):
    """A frame image is empty or cannot be decoded."""


class SelectionError(MomentSamplerError):
    """Frame selection cannot start (eg. empty timeline)."""


class ArtifactError(MomentSamplerError, ValueError):
    """An on-disk artifact violates its schema."""


class HarnessError(MomentSamplerError, ValueError):
    """Evaluation inputs are inconsistent (unknown items, no records, ...)."""


class BackendError(MomentSamplerError):
    """An answer backend failed to produce an answer."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code
        """Last HTTP status received (None for transport errors or non-HTTP backends)."""


class ReplayMissError(BackendError):
    """The replay file has no entry for the requested item."""
