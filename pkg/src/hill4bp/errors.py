"""Exception types raised across the package."""


class Hill4bpError(Exception):
    """Base class for all package errors."""


class ParameterError(Hill4bpError, ValueError):
    pass


class SingularityError(Hill4bpError, ZeroDivisionError):
    pass


class IntegrationError(Hill4bpError):
    pass


class CollisionError(IntegrationError):
    """Trajectory came closer to the small primary than the collision floor."""


class StiffnessError(IntegrationError):
    """Step size underflow or step budget exhausted."""


class NoCrossingError(IntegrationError):
    pass


class TangencyError(IntegrationError):
    pass


class CorrectionError(Hill4bpError):
    """Differential correction failed to converge."""


class FamilyBoundaryError(CorrectionError):
    pass


class RangeError(Hill4bpError, ValueError):
    pass


class SeedingError(Hill4bpError):
    pass


class EmptyCutError(Hill4bpError):
    pass


class ResolutionError(Hill4bpError):
    pass


class FootpointError(Hill4bpError):
    pass


class ContinuationError(Hill4bpError):
    pass


class DecayError(Hill4bpError):
    """Melnikov integrand did not decay within the allowed horizon."""


class DomainError(Hill4bpError, ValueError):
    pass


class StageDependencyError(Hill4bpError):
    pass
