"""Exception hierarchy shared across the engine."""


class EdgeprofError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(EdgeprofError, ValueError):
    """Tensor shapes incompatible with the requested operation."""


class IndexRangeError(EdgeprofError, IndexError):
    """Gather index outside the addressable row range."""


class GraphError(EdgeprofError, ValueError):
    """Invalid neighbor-graph request (k/n preconditions violated)."""


class ConfigError(EdgeprofError, ValueError):
    """Model configuration or weight store is inconsistent."""


class DegenerateCloudError(EdgeprofError, ValueError):
    """Point cloud cannot be normalized (all points identical)."""


class FormatError(EdgeprofError, ValueError):
    """Base class for on-disk format violations."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class FormatVersionError(FormatError):
    """Recognized format family but unsupported version."""


class TruncatedFileError(FormatError):
    """File ends before the payload promised by its header."""
