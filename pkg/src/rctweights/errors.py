"""Exception types shared across the package."""


class DatasetError(ValueError):
    """Raised when a dataset cannot be loaded or violates its invariants."""


class ModelFitError(RuntimeError):
    """Base class for model-fitting failures."""


class SeparationDetected(ModelFitError):
    """Logistic fit diverged: probabilities pinned at the clamp or |coef| > 30.

    ``covariates`` names the columns implicated by oversized coefficients
    (empty when the failure shows up only through clamped probabilities).
    """

    def __init__(self, message, covariates=()):
        super().__init__(message)
        self.covariates = tuple(covariates)


class RankDeficientDesign(ModelFitError):
    """Design matrix is numerically rank deficient."""


class MaxIterationsExceeded(ModelFitError):
    """Iterative solver ran out of iterations before reaching tolerance."""


class DegenerateWeights(ValueError):
    """Weighted denominator for an arm is zero or non-finite."""


class BoundaryMean(ValueError):
    """A ratio estimand was requested with an arm mean at or outside (0, 1).

    ``point`` carries the signed-infinite (or nan) estimate so callers can
    report a flagged row instead of a bare failure.
    """

    def __init__(self, message, point=float("nan")):
        super().__init__(message)
        self.point = point


class SingularMatrixError(RuntimeError):
    """A sandwich-variance matrix (bread or meat) is numerically singular."""
