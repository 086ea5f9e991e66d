"""Exception types shared across the package."""


class DampguideError(Exception):
    """Base class for all package errors."""


class NoConvergence(DampguideError):
    """Newton iteration did not reach the residual gate."""


class BranchJump(DampguideError):
    """A continued root left the strip of its branch."""


class EigSolverFailure(DampguideError):
    """Dense eigensolver did not converge."""


class NumericalBlowup(DampguideError):
    """A field left the finite range during time stepping."""


class DegenerateWindow(DampguideError):
    """Too few samples to fit a rate."""


class NearSpectrum(DampguideError):
    """Spectral parameter lies within the safety margin of the spectrum."""

    def __init__(self, message, xi=None, mode=None, distance=None):
        super().__init__(message)
        self.xi = xi
        self.mode = mode
        self.distance = distance


class ContourTooClose(DampguideError):
    """Resolvent blows up on a projection contour."""


class OnSpectrum(DampguideError):
    """Spectral parameter lies on the spectrum of the mode resolvent."""


class ConfigError(DampguideError):
    """Invalid run configuration."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class CflViolation(ConfigError):
    """Time step too large for the grid."""

    def __init__(self, message, field="dt"):
        super().__init__(message, field)
