"""Dense reference solvers and analytic checks.

Everything here is brute force and desk-scale on purpose: the symmetric
eigensolver and the SVD are Jacobi methods written out here, so they share
no code path with the LAPACK routines the solvers use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConclusionViolated, PreconditionError, SingularSystemError, ValidationError
from .fixed_point import el_residual
from .svd import SvdTriplet
from .tensor import Operator1D, OperatorKind, RankOneTerm, broadcast_operators

KRONECKER_MAX_D = 64
KRONECKER_MAX_SIZE = 4096
DENSE_SVD_MAX = 512


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    """Eigenvalues, ascending."""
    vectors: np.ndarray
    """Orthonormal eigenvectors as columns."""


def _round_robin(m):
    """Yield ``m - 1`` rounds of ``m // 2`` disjoint index pairs covering every pair once (``m`` even)."""
    players = list(range(m))
    for _ in range(m - 1):
        half = m // 2
        yield [(players[i], players[m - 1 - i]) for i in range(half)]
        players = [players[0], players[-1]] + players[1:-1]


def _pairs_arrays(pairs, n):
    p = np.array([min(a, b) for a, b in pairs if a < n and b < n], dtype=int)
    q = np.array([max(a, b) for a, b in pairs if a < n and b < n], dtype=int)
    return p, q


def jacobi_eigh(M, tol: float = 1e-15, max_sweeps: int = 60) -> EigenDecomposition:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Rotations on disjoint index pairs commute, so each round of a
    round-robin ordering is applied at once.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("jacobi_eigh needs a square matrix")
    n = A.shape[0]
    if n > DENSE_SVD_MAX:
        raise ValidationError(f"jacobi_eigh is limited to d <= {DENSE_SVD_MAX}")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n == 1:
        return EigenDecomposition(A.diagonal().copy(), V)
    m = n + (n % 2)
    rounds = [_pairs_arrays(r, n) for r in _round_robin(m)]
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale or scale == 0:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = apq != 0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = A[p, p], A[q, q]
            with np.errstate(over="ignore", divide="ignore"):
                tau = (aqq - app) / (2.0 * apq)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
    order = np.argsort(np.diag(A), kind="stable")
    return EigenDecomposition(np.diag(A)[order].copy(), V[:, order].copy())


def kronecker_sum_matrix(ops, shape) -> np.ndarray:
    """Dense matrix of ``A`` acting on row-major ``vec(X)``."""
    ops = broadcast_operators(ops, shape)
    size = math.prod(shape)
    K = np.zeros((size, size))
    for k, op in enumerate(ops):
        left = np.eye(math.prod(shape[:k]))
        right = np.eye(math.prod(shape[k + 1 :]))
        K += np.kron(np.kron(left, op.entries), right)
    return K


def sylvester_dense(op, F, method: str = "auto") -> np.ndarray:
    """Solve ``A(G) = F`` densely (``D G + G D = F``, or ``B G + G B^T = F``).

    Parameters
    ----------
    op : Operator1D or sequence of Operator1D
    F : array
    method : {"auto", "eigen", "kronecker"}
        ``eigen`` diagonalises every (symmetric) operator with
        :func:`jacobi_eigh`; ``kronecker`` factorises the full Kronecker-sum
        matrix. ``auto`` picks ``eigen`` when all operators are symmetric.
    """
    F = np.asarray(F, dtype=float)
    ops = broadcast_operators(op, F.shape)
    symmetric = all(o.is_symmetric for o in ops)
    if method == "auto":
        method = "eigen" if symmetric else "kronecker"
    if method == "eigen":
        if not symmetric:
            raise ValidationError("eigen method needs symmetric operators")
        decomps = [jacobi_eigh(o.entries) for o in ops]
        Fh = F
        for k, ed in enumerate(decomps):
            Fh = np.moveaxis(np.tensordot(ed.vectors.T, Fh, axes=(1, k)), 0, k)
        denom = np.zeros(F.shape)
        for k, ed in enumerate(decomps):
            shape = [1] * F.ndim
            shape[k] = -1
            denom = denom + ed.values.reshape(shape)
        if np.any(denom == 0):
            raise SingularSystemError("Kronecker-sum operator is singular")
        Gh = Fh / denom
        for k, ed in enumerate(decomps):
            Gh = np.moveaxis(np.tensordot(ed.vectors, Gh, axes=(1, k)), 0, k)
        return Gh
    if method != "kronecker":
        raise ValidationError(f"unknown method {method!r}")
    if max(F.shape) > KRONECKER_MAX_D or F.size > KRONECKER_MAX_SIZE:
        raise ValidationError(
            f"Kronecker oracle limited to d <= {KRONECKER_MAX_D} and {KRONECKER_MAX_SIZE} unknowns, got shape {F.shape}"
        )
    K = kronecker_sum_matrix(ops, F.shape)
    try:
        g = np.linalg.solve(K, F.ravel())
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"Kronecker-sum system is singular: {exc}") from exc
    if not np.all(np.isfinite(g)):
        raise SingularSystemError("Kronecker-sum solve produced non-finite values")
    return g.reshape(F.shape)


def dense_svd(G, tol: float = 1e-15, max_sweeps: int = 60) -> list:
    """Singular triplets of ``G`` by one-sided (Hestenes) Jacobi, descending.

    Columns are orthogonalised by plane rotations, which diagonalises
    ``G^T G`` implicitly without squaring its condition number. Triplets with
    numerically zero sigma are dropped.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.size == 0:
        raise ValidationError("dense_svd needs a non-empty matrix")
    if max(G.shape) > DENSE_SVD_MAX:
        raise ValidationError(f"dense_svd is limited to {DENSE_SVD_MAX} rows and columns")
    transposed = G.shape[0] < G.shape[1]
    W = (G.T if transposed else G).copy()
    n = W.shape[1]
    V = np.eye(n)
    if n > 1:
        m = n + (n % 2)
        rounds = [_pairs_arrays(r, n) for r in _round_robin(m)]
        for _ in range(max_sweeps):
            rotated = False
            for p, q in rounds:
                alpha = np.einsum("ij,ij->j", W[:, p], W[:, p])
                beta = np.einsum("ij,ij->j", W[:, q], W[:, q])
                gamma = np.einsum("ij,ij->j", W[:, p], W[:, q])
                active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
                if not np.any(active):
                    continue
                rotated = True
                p, q = p[active], q[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
                with np.errstate(over="ignore", divide="ignore"):
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                Wp, Wq = W[:, p].copy(), W[:, q].copy()
                W[:, p] = Wp * c - Wq * s
                W[:, q] = Wp * s + Wq * c
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = Vp * c - Vq * s
                V[:, q] = Vp * s + Vq * c
            if not rotated:
                break
    sigmas = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigmas, kind="stable")
    smax = sigmas[order[0]] if n else 0.0
    cutoff = max(G.shape) * np.finfo(float).eps * smax
    triplets = []
    for k in order:
        sigma = float(sigmas[k])
        if sigma <= cutoff or sigma == 0:
            continue
        left = W[:, k] / sigma
        right = V[:, k]
        u, v = (right, left) if transposed else (left, right)
        triplets.append(SvdTriplet(sigma, u, v))
    return triplets


def _orthonormal_basis(d, rng):
    Q, Rf = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(Rf))


def counterexample_problem(lambda1: float, lambda2: float, d: int, seed=None, alpha1_shift: float = 0.0):
    """Operator, right-hand side and candidate term of the two-mode counterexample.

    ``D`` has eigenpairs ``(lambda1, phi1)``, ``(lambda2, phi2)`` completed by a
    random orthonormal basis (remaining eigenvalues ``lambda1 + lambda2 + k``).
    With ``g = a1 phi1 phi1^T + a2 phi2 phi2^T`` and ``F = D g + g D``, the pair
    ``r = phi1 + phi2 / 2``, ``s = 2 phi1 + phi2`` solves the Euler-Lagrange
    equations for ``a1 = (9 l1 + l2) / (4 l1)``, ``a2 = (2 l1 + 3 l2) / (2 l2)``.

    Returns ``(D, F, term)``.
    """
    if not (lambda1 > 0 and lambda2 > 0):
        raise PreconditionError("eigenvalues must be positive")
    if lambda1 == lambda2:
        raise PreconditionError("the counterexample needs two distinct eigenvalues")
    if d < 2:
        raise PreconditionError("d must be at least 2")
    rng = np.random.default_rng(seed)
    Q = _orthonormal_basis(d, rng)
    lam = np.concatenate([[lambda1, lambda2], lambda1 + lambda2 + np.arange(1.0, d - 1.0)])
    Dm = (Q * lam) @ Q.T
    D = Operator1D(0.5 * (Dm + Dm.T))
    phi1, phi2 = Q[:, 0], Q[:, 1]
    a1 = (9 * lambda1 + lambda2) / (4 * lambda1) + alpha1_shift
    a2 = (2 * lambda1 + 3 * lambda2) / (2 * lambda2)
    g = a1 * np.outer(phi1, phi1) + a2 * np.outer(phi2, phi2)
    F = D.entries @ g + g @ D.entries
    term = RankOneTerm((phi1 + 0.5 * phi2, 2.0 * phi1 + phi2))
    return D, F, term


def verify_counterexample(lambda1: float, lambda2: float, d: int = 8, seed=None, alpha1_shift: float = 0.0) -> float:
    """Euler-Lagrange residual of the non-eigen rank-one stationary point.

    Zero up to rounding: a stationary point that is not of the form
    ``alpha_k phi_k (x) psi_k`` exists. A non-zero ``alpha1_shift`` perturbs the
    right-hand side so the same pair is no longer stationary.
    """
    D, F, term = counterexample_problem(lambda1, lambda2, d, seed, alpha1_shift)
    return el_residual(term, F, D)


def eigen_rank_one_el_check(D: Operator1D, alphas) -> float:
    """Max Euler-Lagrange residual of ``alpha_k phi_k phi_k^T`` for ``F = D g + g D``, ``g = sum_j alpha_j phi_j phi_j^T``.

    Eigenpairs are taken in ascending order from :func:`jacobi_eigh`.
    """
    alphas = np.asarray(alphas, dtype=float)
    ed = jacobi_eigh(D.entries)
    if alphas.size > D.d:
        raise ValidationError(f"{alphas.size} coefficients for a {D.d}-dimensional operator")
    gaps = np.diff(ed.values)
    if np.any(gaps <= 1e-12 * max(abs(ed.values).max(), 1.0)):
        raise PreconditionError("operator eigenvalues must be distinct")
    phis = ed.vectors[:, : alphas.size]
    g = (phis * alphas) @ phis.T
    F = D.entries @ g + g @ D.entries
    worst = 0.0
    for k, a in enumerate(alphas):
        if a == 0:
            continue
        root = math.sqrt(abs(a))
        term = RankOneTerm((root * phis[:, k], math.copysign(root, a) * phis[:, k]))
        worst = max(worst, el_residual(term, F, D))
    return worst


def recurrence_bound_check(a, A: float, rtol: float = 1e-12, strict: bool = False) -> bool:
    """Check ``a_n <= A / n`` for a sequence satisfying ``a_1 <= A`` and ``a_{n+1} <= a_n (1 - a_n / A)``.

    Raises
    ------
    PreconditionError
        If the hypotheses fail (message starts with "hypothesis fails").
    ConclusionViolated
        Only with ``strict=True``, when the conclusion fails.
    """
    a = np.asarray(a, dtype=float)
    if not A > 0:
        raise PreconditionError(f"hypothesis fails: A must be positive, got {A}")
    if a.ndim != 1 or a.size == 0:
        raise PreconditionError("hypothesis fails: need a non-empty sequence")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise PreconditionError("hypothesis fails: sequence must be finite and non-negative")
    if a[0] > A * (1 + rtol):
        raise PreconditionError(f"hypothesis fails: a_1 = {a[0]} > A = {A}")
    bound = a[:-1] * (1 - a[:-1] / A)
    slack = rtol * np.maximum(a[:-1], np.finfo(float).tiny)
    bad = np.nonzero(a[1:] > bound + slack)[0]
    if bad.size:
        n = int(bad[0]) + 1
        raise PreconditionError(f"hypothesis fails at n={n}: a_{n + 1} = {a[n]} > a_n (1 - a_n/A) = {bound[n - 1]}")
    n = np.arange(1, a.size + 1)
    holds = bool(np.all(a <= (A / n) * (1 + rtol)))
    if strict and not holds:
        raise ConclusionViolated("conclusion fails: a_n > A/n for some n")
    return holds


def fit_decay_exponent(series, skip: int = 0) -> float:
    """Least-squares slope of ``log(series[n])`` against ``log(n)`` over ``n > skip`` (``n`` is 1-based)."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < skip + 5:
        raise ValidationError(f"need at least skip + 5 = {skip + 5} entries, got {y.size}")
    if np.any(~(y > 0)):
        raise ValidationError("series entries must be positive")
    n = np.arange(1, y.size + 1)[skip:]
    x, ly = np.log(n), np.log(y[skip:])
    x = x - x.mean()
    return float(x @ (ly - ly.mean()) / (x @ x))
