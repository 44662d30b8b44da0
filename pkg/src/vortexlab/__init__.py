"""vortexlab: vortex/monopole solvers on C, on a flat torus, and on their product."""

from .errors import (
    GridMismatchError,
    SolvabilityError,
    SolverError,
    ValidationError,
    VortexLabError,
)
from .geometry import PlaneGrid, ProductGrid, ScalarField, TorusGeometry

__version__ = "0.1.0"

__all__ = [
    "GridMismatchError",
    "SolvabilityError",
    "SolverError",
    "ValidationError",
    "VortexLabError",
    "PlaneGrid",
    "ProductGrid",
    "ScalarField",
    "TorusGeometry",
    "__version__",
]
