"""Exception hierarchy shared by all flexlift modules."""


class FlexliftError(Exception):
    """Base class for every error raised by this package."""


class DegenerateDisplacement(FlexliftError):
    """Endpoint displacement is (nearly) vertical; the bending plane is undefined."""


class CoincidentEndpoints(FlexliftError):
    """The two endpoints coincide."""


class TautRod(FlexliftError):
    """Endpoints are farther apart than the rod's curve length allows."""


class NoConvergence(FlexliftError):
    """The equilibrium solver hit its iteration cap."""


class CovarianceBlowup(FlexliftError):
    """RLS covariance grew beyond the allowed ceiling (insufficient excitation)."""


class PhaseOutOfRange(FlexliftError):
    """A scenario was evaluated outside its time span."""


class DistanceBoundViolation(FlexliftError):
    """A reference trajectory leaves the admissible endpoint-distance band."""


class SolverFailure(FlexliftError):
    """The rod solver failed inside a simulation step."""


class DivergenceDetected(FlexliftError):
    """A vehicle left the admissible state envelope (crash analog)."""


class UnavailableGroundTruth(FlexliftError):
    """True force weights are only known in validation mode."""


class ConfigError(FlexliftError):
    """Invalid or malformed configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class SchemaMismatch(FlexliftError):
    """Report directories were written by incompatible schema versions."""
