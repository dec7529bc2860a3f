"""
Riemannian exponential, logarithm and geodesic distance on the Stiefel
manifold St(n, p) under the one-parameter beta-metric family.
"""

__version__ = "0.1.0"

from .convergence import (
    RateConstants,
    canonical_rate,
    evaluate_constants,
    feasibility_grid,
    max_feasible_delta,
    theoretical_rate_bound,
)
from .geometry import (
    BaseMismatchError,
    TangentVector,
    TargetUnreachableError,
    check_stiefel,
    metric_inner,
    random_pair_at_distance,
    random_point,
    random_tangent,
    stiefel_exp,
    tangent_from_embedded,
    tangent_project,
)
from .kernels import (
    EigenvalueAtMinusOneError,
    SingularSylvesterError,
    orthonormalize_with_completion,
    skew_exp,
    so_principal_log,
    sylvester_symmetric,
)
from .solver import (
    ACCELERATED,
    ALL_STRATEGIES,
    BACKWARD,
    FIXED_FORWARD,
    LogResult,
    NotConvergedError,
    SolverConfig,
    Strategy,
    build_initial_V0,
    canonical_log,
    geodesic_distance,
    pseudo_backward,
    stiefel_log,
    subproblem_iterative,
    subproblem_shooting,
)

__all__ = [name for name in dir() if not name.startswith("_")]
