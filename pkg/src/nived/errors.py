"""Exception types raised across the package."""


class NivedError(Exception):
    """Base class for all package errors."""


class MeshError(NivedError):
    """Structurally invalid background mesh (inverted or non-manifold)."""


class ConfigurationError(NivedError, ValueError):
    """Inconsistent user input: unknown tags, conflicting constraints, bad options."""


class DegenerateSupportError(NivedError):
    """Too few (or collinear) nodes support an evaluation point, or the dual
    problem could not be solved there."""

    def __init__(self, message, point=None, residual=None, iterations=None):
        super().__init__(message)
        self.point = point
        self.residual = residual
        self.iterations = iterations


class SolverError(NivedError):
    """Singular/indefinite system, eigen or Newton non-convergence."""
