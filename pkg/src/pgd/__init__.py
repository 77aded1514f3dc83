"""Greedy rank-one (separated representation) solvers for ``A(G) = F``.

``A(U) = sum_k B_k x_k U`` applies a one-dimensional operator along each mode;
for two dimensions this is the Sylvester form ``D G + G D = F`` (or
``B G + G B^T = F`` for a non-symmetric ``B``).
"""

from .estimators import GreedyRankOneSolver, GreedySVD
from .exceptions import (
    BreakdownError,
    ConclusionViolated,
    DegenerateIterateError,
    DimensionMismatchError,
    MatrixFileError,
    PGDError,
    PreconditionError,
    SingularSystemError,
    SlowConvergenceWarning,
    StalledError,
    ValidationError,
)
from .fixed_point import FixedPointConfig, FixedPointDiagnostics, el_residual, solve_rank_one
from .greedy import (
    GreedyConfig,
    SolveReport,
    Termination,
    TraceRecord,
    check_first_order,
    check_second_order,
    galerkin_coefficients,
    orthogonal_greedy,
    pure_greedy,
    selection_dominance,
    solve,
)
from .oracle import (
    EigenDecomposition,
    dense_svd,
    eigen_rank_one_el_check,
    fit_decay_exponent,
    jacobi_eigh,
    recurrence_bound_check,
    sylvester_dense,
    verify_counterexample,
)
from .svd import SvdTriplet, check_svd_orthogonality, power_method, svd_greedy_decompose
from .tensor import (
    Expansion,
    Operator1D,
    OperatorKind,
    RankOneTerm,
    ResidualState,
    Rhs,
    a_inner,
    a_norm,
    apply_operator,
    build_operator,
    energy,
    read_matrix,
    residual_recompute,
    write_matrix,
)

__version__ = "0.1.0"
