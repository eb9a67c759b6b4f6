"""Exception hierarchy shared across the package."""


class MdpanoError(Exception):
    """Base class for all package-specific errors."""


class CalibrationError(MdpanoError):
    """Invalid camera intrinsics, extrinsics, rig layout, or rig file."""


class AzimuthUndefinedError(MdpanoError):
    """Azimuth requested for a point on the cylinder axis (rho = 0)."""


class NumericDegeneracyError(MdpanoError):
    """A geometric construction degenerated numerically.

    Carries the index of the offending depth layer when known.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class IncompatibleMdpError(MdpanoError):
    """Operation on panoramas whose mapping or shell partition differ."""


class ContainerFormatError(MdpanoError):
    """Malformed serialized panorama container."""


class VersionMismatchError(ContainerFormatError):
    """Container format version not supported by this reader."""


class TruncatedFileError(ContainerFormatError):
    """Container ends before the declared payload and checksum."""


class ChecksumError(ContainerFormatError):
    """Container payload does not match its checksum."""


class ImageIOError(MdpanoError):
    """Unreadable or unsupported image file."""


class ConfigError(MdpanoError):
    """Invalid or unsupported pipeline configuration."""


class SceneFormatError(MdpanoError):
    """Malformed or unsupported synthetic scene file."""
