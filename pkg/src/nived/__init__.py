"""Nodal integration for meshfree Galerkin solid mechanics.

Linear maximum-entropy approximants, integrated either nodally over
median-dual cells with a consistency/stability split of the stiffness
(``nived``) or with Gauss rules inside the background triangles (``mem``).
"""

__version__ = "0.1.0"

from nived.errors import (
    ConfigurationError,
    DegenerateSupportError,
    MeshError,
    SolverError,
)

__all__ = [
    "__version__",
    "ConfigurationError",
    "DegenerateSupportError",
    "MeshError",
    "SolverError",
]
