"""Exception types shared across the solver stack."""


class BalmError(Exception):
    """Base class for all solver errors."""


class NotInterior(BalmError):
    """A point violates strict interiority of the conic block."""


class FactorizationFailure(BalmError):
    """The metric Hessian is numerically indefinite; no Cholesky factor."""


class ZeroGradient(BalmError):
    """Capped CG was called with a zero right-hand side."""


class MatvecBudgetExceeded(BalmError):
    """Capped CG hit its safety cap on matrix-vector products."""

    def __init__(self, msg, best_residual=None):
        super().__init__(msg)
        self.best_residual = best_residual


class CurvatureSearchFailed(BalmError):
    """The slow-decrease branch found no negative-curvature difference.

    Finite termination theory guarantees a witness exists; reaching this
    indicates a numerically broken operator (e.g. asymmetric apply_H).
    """


class DimensionMismatch(BalmError):
    """Operator dimension disagrees with the supplied vector."""


class LineSearchStalled(BalmError):
    """Backtracking exhausted its budget without sufficient decrease."""


class IterationBudgetExceeded(BalmError):
    """Newton-CG hit its per-subproblem iteration cap."""


class SubproblemFailed(BalmError):
    """An inner barrier subproblem solve failed; carries outer context."""

    def __init__(self, msg, outer_iteration=None, cause=None):
        super().__init__(msg)
        self.outer_iteration = outer_iteration
        self.cause = cause


class OuterBudgetExceeded(BalmError):
    """The outer AL loop hit its iteration cap.

    Carries the last state for diagnosis.
    """

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


class ZeroGroundTruth(BalmError):
    """Relative error is undefined for a zero ground-truth matrix."""


class DegenerateColumn(BalmError):
    """A column rescale hit a zero column sum."""


class StepOutOfRange(BalmError):
    """SpaRSA's step coefficient left [alpha_min, alpha_max]."""


class AllNegativeInput(BalmError):
    """Sphere-cap projection received a matrix with no positive part."""


class MissingArtifacts(BalmError):
    """An audit target directory lacks required run artifacts."""


class RankDeficiencyWarning(UserWarning):
    """Constraint Jacobian is numerically rank-deficient at the test point."""
