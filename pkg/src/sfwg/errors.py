"""Exception hierarchy."""


class WGError(Exception):
    """Base class for all errors raised by sfwg."""


class ConfigurationError(WGError, ValueError):
    """Invalid user-facing configuration (levels, degrees, families...)."""


class GeometryError(WGError):
    """Degenerate or unsupported cell geometry."""


class ConstraintError(WGError):
    """The constrained weak-gradient space failed a consistency check."""


class AssemblyError(WGError):
    """Inconsistent global assembly."""


class SolverError(WGError):
    """Linear solver breakdown or non-convergence."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
