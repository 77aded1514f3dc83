"""scikit-learn style wrappers around the greedy solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ValidationError
from .fixed_point import FixedPointConfig
from .greedy import GreedyConfig, Termination, solve
from .svd import svd_greedy_decompose
from .tensor import Operator1D, apply_operator, parse_operator_spec


def _resolve_operator(operator, d):
    if isinstance(operator, Operator1D):
        if operator.d != d:
            raise ValidationError(f"operator has size {operator.d}, data has {d}")
        return operator
    if isinstance(operator, str):
        return parse_operator_spec(operator, d)
    if isinstance(operator, (list, tuple)):
        return [_resolve_operator(op, d) for op in operator]
    raise ValidationError(f"operator must be an Operator1D or a spec string, got {type(operator).__name__}")


class GreedyRankOneSolver(BaseEstimator):
    """Solve ``A(G) = F`` as a sum of rank-one terms.

    Parameters
    ----------
    operator : str or Operator1D, default="laplacian"
        Operator spec (``laplacian``, ``diag-linspace:LO:HI``, ``identity``,
        ``file:PATH``) resolved against the size of ``F``, or an operator.
    algorithm : {"pure", "orthogonal"}
    eps : float
        Frobenius stopping threshold on the residual.
    max_terms : int
    fp_tol, fp_max_sweeps : float, int
        Fixed-point stopping parameters.
    restarts : int
        Random initialisations tried per term.
    random_state : int, Generator or None

    Attributes
    ----------
    expansion_ : Expansion
    report_ : SolveReport
    solution_ : ndarray
        Dense ``U_n``.
    n_terms_ : int
    termination_ : str
    """

    def __init__(self, operator="laplacian", algorithm="pure", eps=1e-6, max_terms=500,
                 fp_tol=1e-8, fp_max_sweeps=500, restarts=3, random_state=None):
        self.operator = operator
        self.algorithm = algorithm
        self.eps = eps
        self.max_terms = max_terms
        self.fp_tol = fp_tol
        self.fp_max_sweeps = fp_max_sweeps
        self.restarts = restarts
        self.random_state = random_state

    def _config(self):
        return GreedyConfig(
            algorithm=self.algorithm,
            eps=self.eps,
            max_terms=self.max_terms,
            fixed_point=FixedPointConfig(max_sweeps=self.fp_max_sweeps, rel_tol=self.fp_tol),
            restarts_per_term=self.restarts,
        )

    def fit(self, F, y=None):
        F = check_array(F, dtype=np.float64, ensure_min_samples=1, ensure_min_features=1)
        if F.shape[0] != F.shape[1] and not isinstance(self.operator, (list, tuple)):
            ops = [_resolve_operator(self.operator, n) for n in F.shape]
        else:
            ops = _resolve_operator(self.operator, F.shape[0])
        report = solve(ops, F, self._config(), self.random_state)
        self.operators_ = ops
        self.report_ = report
        self.expansion_ = report.expansion
        self.n_terms_ = report.n_terms
        self.termination_ = report.termination.value
        self.solution_ = report.expansion.to_dense(F.shape)
        return self

    @property
    def converged_(self) -> bool:
        check_is_fitted(self, "report_")
        return self.report_.termination is Termination.CONVERGED

    def residual(self, F):
        """``F - A(U_n)`` for the fitted solution."""
        check_is_fitted(self, "solution_")
        F = check_array(F, dtype=np.float64)
        if F.shape != self.solution_.shape:
            raise ValidationError(f"F has shape {F.shape}, fitted solution has {self.solution_.shape}")
        return F - apply_operator(self.solution_, self.operators_)


class GreedySVD(TransformerMixin, BaseEstimator):
    """Truncated decomposition of a matrix by greedy rank-one extraction.

    Rows of ``X`` are samples. ``components_`` holds the right singular
    vectors, so :meth:`transform` projects onto them.

    Parameters
    ----------
    n_components : int or None
        Maximum number of terms (all of ``min(X.shape)`` when None).
    eps : float
        Stop when the Frobenius norm of the remainder is at most ``eps``.
    tol, max_sweeps : float, int
        Fixed-point stopping parameters.
    random_state : int, Generator or None
    """

    def __init__(self, n_components=None, eps=1e-10, tol=1e-12, max_sweeps=5000, random_state=None):
        self.n_components = n_components
        self.eps = eps
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        max_terms = self.n_components or min(X.shape)
        cfg = FixedPointConfig(max_sweeps=self.max_sweeps, rel_tol=self.tol)
        triplets = svd_greedy_decompose(X, self.eps, max_terms, cfg, self.random_state)
        self.triplets_ = triplets
        self.singular_values_ = np.array([t.sigma for t in triplets])
        self.components_ = np.array([t.v for t in triplets]).reshape(len(triplets), X.shape[1])
        self.left_vectors_ = np.array([t.u for t in triplets]).reshape(len(triplets), X.shape[0]).T
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z, dtype=float) @ self.components_
