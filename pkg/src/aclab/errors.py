"""Exception types shared across the laboratory."""


class LabError(Exception):
    """Base class for all laboratory errors."""


class DegenerateWells(LabError):
    """The two declared well locations coincide."""


class NondegenerateWellViolation(LabError):
    """W'' at a well is not strictly positive."""


class QuadratureFailure(LabError):
    """The profile quadrature did not converge (invalid potential)."""


class FitFailure(LabError):
    """Tail values underflowed or are unusable for a decay fit."""


class OverflowGuard(LabError):
    """An exponential normalization would leave the float range."""


class CompatibilityViolation(LabError):
    """An orthogonality precondition on the data is not met."""


class ResolutionError(LabError):
    """The grid does not resolve the requested layer width."""


class TubeViolation(LabError):
    """A point or interface leaves the Fermi tube of validity."""


class NewtonDivergence(LabError):
    """Newton residuals increased for several consecutive steps."""


class BoxViolation(LabError):
    """The interface estimate left the configured a-priori box."""


class SingularJacobian(LabError):
    """The (symmetry-reduced) Jacobian is numerically singular."""


class JacobiSingular(LabError):
    """The reference interface fails its nondegeneracy check."""


class ContractionFailure(LabError):
    """The two-step iteration stopped contracting."""


class EmptyNodalSet(LabError):
    """The field has no sign change (constant branch)."""


class ConfigError(LabError):
    """A run configuration failed to parse or validate."""
