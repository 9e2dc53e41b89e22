"""Exception types raised across the package."""


class XmodalError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(XmodalError):
    def __init__(self, what: str, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class DegenerateInputError(XmodalError):
    """Zero-norm or otherwise degenerate numerical input."""


class FormatError(XmodalError):
    """Malformed file header or record."""


class CorruptFileError(XmodalError):
    """File shorter than its header promises, or payload inconsistent."""


class VersionError(XmodalError):
    """File format version not supported by this build."""


class GalleryError(XmodalError):
    """Inconsistent gallery contents (counts, class ids, caption presence)."""


class ConfigError(XmodalError):
    """Invalid run configuration."""
