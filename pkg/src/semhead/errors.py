"""Error taxonomy shared by every module, mapped onto fixed CLI exit codes.

Exit-code table: 0 ok, 2 config, 3 data, 4 dims, 5 io.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIMS = 4
EXIT_IO = 5


class EngineError(Exception):
    """Base for all errors raised by this package."""

    exit_code = EXIT_DATA


class ConfigError(EngineError):
    """Invalid configuration value, unknown key, or bad parameter."""

    exit_code = EXIT_CONFIG


class BadParam(ConfigError):
    """An algorithm parameter is out of its valid range."""


class BadSpec(ConfigError):
    """A synthetic-task spec violates its invariants."""


class DataError(EngineError):
    """Malformed, corrupt, or inconsistent data."""

    exit_code = EXIT_DATA


class BadMagic(DataError):
    """File does not start with the expected magic bytes."""


class VersionUnsupported(DataError):
    """File format version is not supported by this build."""


class ChecksumMismatch(DataError):
    """Stored checksum does not match the payload."""


class TruncatedRecord(DataError):
    """A record or payload ends before its declared extent."""


class LengthMismatch(DataError):
    """Run lengths do not sum to the expected grid size."""


class EmptyLabel(DataError):
    """A label vector that must have at least one hot entry is all zero."""


class EmptyDataset(DataError):
    """A dataset that must contain records is empty."""


class LabelOutOfRange(DataError):
    """A label grid contains values outside the declared class range."""


class NoGroundTruth(DataError):
    """Evaluation was asked to aggregate with no ground-truth class present."""


class IdSetMismatch(DataError):
    """Prediction and ground-truth directories cover different image ids."""


class DimsError(EngineError):
    """Array or parameter dimensions are inconsistent."""

    exit_code = EXIT_DIMS


class ShapeMismatch(DimsError):
    """Operand shapes are incompatible."""


class DimsMismatch(DimsError):
    """Stored dims differ from the expected dims."""


class BadDims(DimsError):
    """A dimension chain is invalid (too short or non-positive)."""
