"""Exception types shared across the package."""


class CrkanError(Exception):
    """Base class for all package errors."""


class NonFiniteError(CrkanError):
    """A computation produced NaN or infinity."""


class SingularInputError(CrkanError):
    """Input point lies inside a field's singular exclusion region."""


class DegenerateRangeError(CrkanError):
    """Observed value range too narrow to build a knot grid on."""


class DegenerateFitError(CrkanError):
    """Candidate function is constant over the fitted range."""


class DegenerateVarianceError(CrkanError):
    """Reference field has (near-)zero variance, R^2 undefined."""


class ResolutionMismatchError(CrkanError):
    """Two grids that must align have different resolutions."""


class ArchitectureMismatchError(CrkanError):
    """Checkpoint architecture differs from the requested one."""


class DivergedError(CrkanError):
    """Training or integration left the finite/bounded regime."""


class CheckpointError(CrkanError):
    """Checkpoint file is malformed or fails validation."""


class ConfigError(CrkanError):
    """Invalid or unknown configuration entry."""
