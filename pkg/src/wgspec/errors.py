"""Exception types shared across the package."""


class WgspecError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(WgspecError):
    pass


class ThresholdViolationError(WgspecError):
    """Spectral parameter at or above the mode threshold."""


class GeometryError(WgspecError):
    """Support box, shift or station window does not fit the grid."""


class PayloadValidationError(WgspecError):
    """Perturbation payload violates a symmetry/support requirement."""


class ShiftRejectedError(WgspecError):
    """Factorization hit a near-zero pivot; caller should nudge the shift."""

    def __init__(self, shift, column):
        super().__init__(f"near-zero pivot at column {column} for shift {shift!r}")
        self.shift = shift
        self.column = column


class NearSingularError(WgspecError):
    """Resolvent requested too close to the spectrum."""


class IncompleteBasisError(WgspecError):
    """More eigenvalues below the ceiling than requested."""

    def __init__(self, found, requested):
        super().__init__(f"{found} eigenvalues below ceiling, only {requested} requested")
        self.found = found
        self.requested = requested


class DeflationDefectError(WgspecError):
    """Deflated solve failed its residual certificate (eigenspace incomplete?)."""


class SolverError(WgspecError):
    """Iterative eigensolver failed to converge."""


class ReductionRegimeError(WgspecError):
    """Coupling correction is not contractive; the separation is too small."""


class UnstableExtractionError(WgspecError):
    """Far-field amplitude plateau too noisy or rejected by policy."""


class InsufficientDataError(WgspecError):
    pass


class TuningFailureError(WgspecError):
    pass


class ConfigError(WgspecError):
    """Configuration rejected; carries the offending field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
