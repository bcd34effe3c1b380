"""Extractor exception types."""


class ExtractorError(Exception):
    """Base class for extractor errors."""


class BackboneUnavailableError(ExtractorError):
    """The requested backbone's weights cannot be loaded; the message
    explains how to obtain them."""


class ImageError(ExtractorError):
    """The input image cannot be read or has an unusable shape."""


class ExtractorConfigError(ExtractorError):
    """A configuration value is outside its legal range."""
