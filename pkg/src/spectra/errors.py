"""Exception hierarchy shared by every module."""


class SpectraError(Exception):
    """Base class for all domain failures raised by this package."""

    #: short machine-readable reason used in CLI reports
    reason = "error"


class IllConditionedPolynomial(SpectraError):
    reason = "ill-conditioned-polynomial"


class NonConvergence(SpectraError):
    """Adaptive quadrature hit its subdivision limit.

    ``worst`` holds ``(segment_index, t_left, t_right, error_estimate)`` of the
    interval that failed to converge.
    """

    reason = "non-convergence"

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class StiffnessError(SpectraError):
    reason = "stiffness"


class SingularCurveError(SpectraError):
    reason = "singular-curve"


class RealityViolation(SpectraError):
    reason = "reality-violation"


class DegreeError(SpectraError):
    reason = "degree-mismatch"


class ChartError(SpectraError):
    reason = "chart-error"


class PathTooCloseError(SpectraError):
    reason = "path-too-close-to-branch-point"


class HomologyConstructionError(SpectraError):
    reason = "homology-construction"


class DegenerateCurveError(SpectraError):
    reason = "degenerate-curve"


class NumericalInconsistency(SpectraError):
    reason = "numerical-inconsistency"


class IllConditionedPeriods(SpectraError):
    reason = "ill-conditioned-periods"


class PreconditionError(SpectraError):
    reason = "precondition"


class RankDeficientJacobian(SpectraError):
    reason = "rank-deficient-jacobian"


class SearchFailed(SpectraError):
    reason = "search-failed"


class AlgebraSpecError(SpectraError):
    reason = "algebra-spec-inconsistency"


class GridError(SpectraError):
    reason = "grid-too-coarse"


class NonFlatError(SpectraError):
    reason = "non-flat-input"


class FitError(SpectraError):
    reason = "fit-failed"
