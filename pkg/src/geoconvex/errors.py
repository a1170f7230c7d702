"""Exception types raised by the geometry and experiment layers."""


class LabError(Exception):
    """Base class for all errors raised by this package."""


class ChartExit(LabError):
    """A geodesic or sample left every declared chart domain box."""


class NonFiniteState(LabError):
    """An integrator or finite-difference stencil produced NaN/Inf."""


class NoConvergence(LabError):
    """An iterative solver exhausted all starts without converging."""


class AmbiguousSolution(LabError):
    """Two solver starts converged to distinct answers (near cut locus)."""

    def __init__(self, msg, candidates=None):
        super().__init__(msg)
        self.candidates = candidates or []


class DegeneratePlane(LabError):
    """Tangent 2-plane spanned by nearly collinear vectors."""


class DegenerateTriangle(LabError):
    """Triangle vertices are geodesically collinear or coincident."""


class TubeTooNarrow(LabError):
    """No usable half-width could be validated for a Fermi chart."""


class SamplingFailure(LabError):
    """Rejection sampling produced too few valid points."""


class EmptyCandidateSet(LabError):
    """A projection searched an empty candidate parametrization."""


class ZeroGradient(LabError):
    """Level-set operation hit a point with vanishing gradient."""


class ConjugatePoint(LabError):
    """Jacobi boundary-value problem is singular (conjugate endpoints)."""


class GridMismatch(LabError):
    """Two fields sampled on incompatible parameter grids."""


class NotAGeodesicBoundary(LabError):
    """Operation requires a set whose boundary is a geodesic segment."""


class NotANormal(LabError):
    """Supplied direction failed the proximal-normal membership check."""


class OrientationFailure(LabError):
    """Inward normal field is inconsistent across boundary samples."""


class NotAViolation(LabError):
    """Function does not violate the chord inequality at the given point."""


class MaximizerOnBoundary(LabError):
    """Certificate maximizer landed on the tube boundary (tolerances too loose)."""


class ConfigError(LabError):
    """Experiment configuration is malformed; message carries the field path."""
