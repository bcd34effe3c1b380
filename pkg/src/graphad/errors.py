"""Exception types shared across the package."""


class GraphAdError(Exception):
    """Base class for all package errors."""


class FormatError(GraphAdError):
    """Byte stream does not look like one of our file formats."""


class UnsupportedVersionError(FormatError):
    """Recognized format but unknown version number."""


class TruncationError(FormatError):
    """Stream ended before the declared payload was complete."""


class DataError(GraphAdError):
    """Payload values violate an invariant (NaN/Inf, bad shape metadata)."""


class DimensionError(GraphAdError):
    """Shape or index disagreement between arguments."""


class ConfigError(GraphAdError):
    """A configuration value is outside its legal range."""


class NumericalError(GraphAdError):
    """Computation produced a non-finite value."""


class DegenerateLabelsError(GraphAdError):
    """Metric undefined for the given label distribution."""


class DegenerateNormWarning(UserWarning):
    """A vector norm underflowed; cosine treated as zero."""
