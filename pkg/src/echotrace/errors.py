"""Exception and warning types shared across the package."""


class EchotraceError(Exception):
    """Base class for all errors raised by this package."""


class StlParseError(EchotraceError):
    """Raised when an STL file is malformed (truncated, bad counts, junk)."""


class EmptyMeshError(EchotraceError):
    """Raised when mesh repair removes every face."""


class InvalidMaterialError(EchotraceError):
    """Raised for out-of-range material parameters."""


class GridMismatchError(EchotraceError):
    """Raised when a spectrum does not match the configured frequency grid."""


class NoDiffractionCandidatesError(EchotraceError):
    """Raised when no face exceeds the diffraction curvature threshold."""


class SingularFitError(EchotraceError):
    """Raised when a filter-bank fit is singular; increase ridge or taps."""


class InvalidBandError(EchotraceError):
    """Raised for emitted-call bands that violate the sampling setup."""


class ConfigError(EchotraceError):
    """Raised for missing or inconsistent configuration fields."""


class OrientationWarning(UserWarning):
    """Emitted when face windings cannot be made globally consistent."""


class IsolatedVertexWarning(UserWarning):
    """Emitted when a vertex has no incident face during curvature estimation."""
