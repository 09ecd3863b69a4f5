"""Exception hierarchy shared by every module.

Each class maps onto one CLI exit code (see ``binaural_tse.cli``).
"""


class BinauralTseError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InvalidInputError(BinauralTseError, ValueError):
    exit_code = 2


class ConfigError(BinauralTseError, ValueError):
    exit_code = 2


class TruncationError(InvalidInputError):
    """An impulse response does not fit in the requested FFT size."""


class FormatError(BinauralTseError):
    """A file does not match its schema. ``field`` holds the JSON path."""

    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class IntegrityError(BinauralTseError):
    exit_code = 3


class GeometryError(InvalidInputError):
    """Source or listener outside the room."""


class SingularityError(InvalidInputError):
    """Zero propagation distance."""


class SizingError(ConfigError):
    """FFT too short for the requested delays."""


class InfeasibleAcousticsError(ConfigError):
    """Room too small to realize the requested reverberation time."""


class SilentSourceError(InvalidInputError):
    """A source has zero energy, so an SIR cannot be realized."""


class MissingArtifactError(BinauralTseError):
    exit_code = 4
