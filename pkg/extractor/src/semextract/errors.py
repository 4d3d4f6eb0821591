class ExtractorError(Exception):
    exit_code = 3


class ModelUnavailable(ExtractorError):
    """A required model backend or checkpoint is not available."""

    exit_code = 4


class ImageDecodeError(ExtractorError):
    """An input image could not be decoded."""


class JobError(ExtractorError):
    """Invalid extraction job configuration."""

    exit_code = 2
