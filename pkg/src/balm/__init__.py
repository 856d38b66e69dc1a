"""Barrier augmented-Lagrangian solver for nonconvex conic programs.

Finds approximate second-order stationary points of
min f(x) s.t. c(x) = 0, x in K via a preconditioned Newton-CG method on
a sequence of barrier-AL subproblems, with capped conjugate gradient and
a randomized Lanczos minimum-eigenvalue oracle as the Krylov engines.
"""

from .barriers import (
    BarrierDomain,
    DualConeCheck,
    InteriorPoint,
    OrthantBarrier,
    PreconditionerFactor,
    VariableLayout,
    barrier_gradient,
    barrier_hessian_apply,
    barrier_value,
    dual_cone_certificate,
    dual_local_norm,
    local_norm,
    orthant,
    preconditioner,
)
from .capped_cg import CappedCgConfig, DirectionKind, KrylovOutcome, capped_cg_solve
from .driver import (
    ALState,
    DriverConfig,
    SolveReport,
    find_anchor,
    k_epsilon,
    mu_schedule,
    solve,
)
from .eig_oracle import (
    CERTIFIED,
    NEGATIVE_CURVATURE,
    OracleConfig,
    OracleOutcome,
    iteration_cap,
    min_eig_oracle,
)
from .errors import (
    AllNegativeInput,
    BalmError,
    CurvatureSearchFailed,
    DegenerateColumn,
    DimensionMismatch,
    FactorizationFailure,
    IterationBudgetExceeded,
    LineSearchStalled,
    MatvecBudgetExceeded,
    MissingArtifacts,
    NotInterior,
    OuterBudgetExceeded,
    RankDeficiencyWarning,
    StepOutOfRange,
    SubproblemFailed,
    ZeroGradient,
    ZeroGroundTruth,
)
from .model import (
    ALParameters,
    Certificate,
    ConicModel,
    al_gradient,
    al_hvp,
    al_objective,
    al_value,
    check_fosp,
    check_sosp,
    ctilde,
)
from .newton_cg import (
    NewtonCgConfig,
    SubproblemObjective,
    SubproblemResult,
    line_search_nc,
    line_search_sol,
    solve_subproblem,
)
from .sparsa import (
    SparsaConfig,
    SparsaResult,
    project_column_simplex,
    project_fro_ball,
    project_sphere_nonneg,
    sparsa_solve,
)

__version__ = "0.1.0"
