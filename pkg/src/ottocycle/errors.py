"""Exception types shared across the package."""


class OttocycleError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(OttocycleError, ValueError):
    """Malformed input: bad grid sizes, mismatched shapes, out-of-range indices."""


class ConfigError(OttocycleError, ValueError):
    """A run configuration failed validation; nothing was computed."""


class ConvergenceError(OttocycleError):
    """A nonlinear solve failed to reach the requested residual.

    Carries the last residual so callers can report how far off the solve was.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SolverFailureError(OttocycleError):
    """A linear solve failed (singular or numerically degenerate system)."""


class UnreachableMagnetizationError(OttocycleError):
    """The requested magnetization cannot be realized at the given temperature."""


class DegenerateReferenceError(OttocycleError):
    """The reference state of a relative distance has zero norm."""


class SingularForceError(OttocycleError):
    """The effective-force denominator vanished beyond tolerance."""

    def __init__(self, message, rapidity=None):
        super().__init__(message)
        self.rapidity = rapidity


class FlowSingularityError(OttocycleError):
    """The covariance matrix of the thermal flow is numerically singular."""


class StrokeFailureError(OttocycleError):
    """An adiabatic stroke failed; carries the step index where it happened."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
