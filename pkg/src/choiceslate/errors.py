"""Exception types shared by every stage of the toolkit."""


class InputError(ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(ValueError):
    """Invalid configuration values."""


class UndefinedAUCError(InputError):
    """AUC requested for labels that contain a single class."""


class SearchCapExceeded(InputError):
    """Exhaustive slate search would exceed the configured subset cap."""


class StageOrderError(RuntimeError):
    """A CLI stage was run before the artifact it depends on exists."""


class CheckpointError(Exception):
    """Base class for checkpoint loading failures.

    Every subclass carries a distinct integer ``code`` so callers (and the
    CLI exit status) can tell failure modes apart.
    """

    code = 10


class BadMagicError(CheckpointError):
    code = 11


class VersionMismatchError(CheckpointError):
    code = 12


class DimensionMismatchError(CheckpointError):
    code = 13


class TruncatedFileError(CheckpointError):
    code = 14
