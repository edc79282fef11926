"""Exception types shared across the package."""


class DrumCriticError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DrumCriticError):
    """Invalid configuration value or unusable runtime setup."""


class LibraryError(DrumCriticError):
    """Sample library cannot be loaded or an entry is unresolvable."""


class RenderError(DrumCriticError):
    """A loop references samples that do not resolve in the library."""


class RecordError(DrumCriticError):
    """A persisted record is malformed; the message names the offending field."""


class WavFormatError(DrumCriticError):
    """Byte stream is not a decodable RIFF/WAVE PCM file."""


class CheckpointError(DrumCriticError):
    """Critic checkpoint blob is truncated, corrupt, or version-incompatible."""


class SequencingError(DrumCriticError):
    """A session call arrived out of protocol order (stale loop, pending rating)."""


class SessionStateError(DrumCriticError):
    """The session is not in a state where the requested operation is defined."""
