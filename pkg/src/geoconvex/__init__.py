"""geoconvex: convex sets, proximal normal cones and distance-function
convexity on Riemannian manifolds, at desk scale."""

from .manifolds import (  # noqa: F401
    ManifoldSpec,
    Point,
    TangentVector,
    euclidean,
    hyperbolic,
    load_manifold,
    paraboloid,
    sphere,
    surface_of_revolution,
)
from .tolerances import DEFAULT, ToleranceProfile  # noqa: F401

__version__ = "0.1.0"
