import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pgd.exceptions import ConclusionViolated, PreconditionError, SingularSystemError, ValidationError
from pgd.oracle import (
    counterexample_problem,
    dense_svd,
    eigen_rank_one_el_check,
    fit_decay_exponent,
    jacobi_eigh,
    kronecker_sum_matrix,
    recurrence_bound_check,
    sylvester_dense,
    verify_counterexample,
)
from pgd.fixed_point import el_residual
from pgd.tensor import Operator1D, OperatorKind, RankOneTerm, apply_operator, build_operator

from conftest import random_spd


# --- Jacobi eigensolver ------------------------------------------------------


@given(st.integers(1, 24), st.integers(0, 10_000))
def test_jacobi_eigh_invariants(d, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    M = M + M.T
    ed = jacobi_eigh(M)
    assert np.all(np.diff(ed.values) >= 0)
    assert np.linalg.norm(ed.vectors.T @ ed.vectors - np.eye(d)) <= 1e-10
    recon = (ed.vectors * ed.values) @ ed.vectors.T
    assert np.linalg.norm(M - recon) <= 1e-8 * max(np.linalg.norm(M), 1e-300)


def test_jacobi_eigh_laplacian_closed_form():
    d = 12
    h = 1 / (d + 1)
    expected = 4 / h**2 * np.sin(np.arange(1, d + 1) * np.pi * h / 2) ** 2
    np.testing.assert_allclose(jacobi_eigh(build_operator("fd_laplacian", d).entries).values, expected, rtol=1e-12)


def test_jacobi_eigh_rejects_nonsquare():
    with pytest.raises(ValidationError):
        jacobi_eigh(np.ones((2, 3)))


# --- Sylvester oracle ---------------------------------------------------------


def test_sylvester_identity_halves():
    F = np.arange(6.0).reshape(2, 3)
    G = sylvester_dense([build_operator("identity", 2), build_operator("identity", 3)], F)
    np.testing.assert_allclose(G, F / 2, atol=1e-15)


def test_sylvester_diag_closed_form():
    G = sylvester_dense(Operator1D(np.diag([1.0, 2.0])), np.ones((2, 2)))
    np.testing.assert_allclose(G, [[0.5, 1 / 3], [1 / 3, 0.25]], atol=1e-15)


def test_sylvester_self_consistency_100_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = int(rng.integers(2, 33))
        D = random_spd(d, rng)
        F = rng.standard_normal((d, d))
        G = sylvester_dense(D, F)
        assert np.linalg.norm(apply_operator(G, D) - F) <= 1e-9 * np.linalg.norm(F)


def test_sylvester_paths_agree_when_antisymmetric_part_zero(rng):
    D = random_spd(6, rng)
    B = Operator1D(D.entries, OperatorKind.NONSYMMETRIC)
    F = rng.standard_normal((6, 6))
    np.testing.assert_allclose(sylvester_dense(B, F), sylvester_dense(D, F), atol=1e-10)


def test_sylvester_nonsymmetric_residual(rng):
    A = rng.standard_normal((7, 7))
    B = Operator1D(build_operator("fd_laplacian", 7).entries + 0.5 * (A - A.T), OperatorKind.NONSYMMETRIC)
    F = rng.uniform(size=(7, 7))
    G = sylvester_dense(B, F)
    assert np.linalg.norm(B.entries @ G + G @ B.entries.T - F) <= 1e-9 * np.linalg.norm(F)


def test_sylvester_three_dimensions(rng):
    ops = [random_spd(3, rng), random_spd(4, rng), random_spd(2, rng)]
    F = rng.standard_normal((3, 4, 2))
    for method in ("eigen", "kronecker"):
        G = sylvester_dense(ops, F, method=method)
        assert np.linalg.norm(apply_operator(G, ops) - F) <= 1e-10 * np.linalg.norm(F)


def test_sylvester_singular():
    B = Operator1D(np.array([[0.0, 1.0], [-1.0, 0.0]]), OperatorKind.NONSYMMETRIC)
    with pytest.raises(SingularSystemError):
        sylvester_dense(B, np.array([[1.0, 0.0], [0.0, 1.0]]))


def test_sylvester_kronecker_cap():
    op = Operator1D(np.eye(65) + np.eye(65, k=1), OperatorKind.NONSYMMETRIC)
    with pytest.raises(ValidationError, match="Kronecker oracle limited"):
        sylvester_dense(op, np.ones((65, 65)))


def test_kronecker_matrix_row_major(rng):
    ops = [random_spd(3, rng), random_spd(2, rng)]
    X = rng.standard_normal((3, 2))
    K = kronecker_sum_matrix(ops, (3, 2))
    np.testing.assert_allclose(K @ X.ravel(), apply_operator(X, ops).ravel(), atol=1e-12)


# --- dense SVD ----------------------------------------------------------------


def test_dense_svd_diag():
    t = dense_svd(np.diag([1.0, 3.0]))
    assert [x.sigma for x in t] == pytest.approx([3.0, 1.0])
    np.testing.assert_allclose(np.abs(t[0].u), [0, 1])


def test_dense_svd_rank_one(rng):
    u, v = rng.standard_normal(5), rng.standard_normal(4)
    t = dense_svd(np.outer(u, v))
    assert len(t) == 1
    assert t[0].sigma == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))


@pytest.mark.parametrize("shape", [(6, 4), (4, 6), (16, 12), (1, 5)])
def test_dense_svd_reconstruction(shape, rng):
    G = rng.standard_normal(shape)
    t = dense_svd(G)
    recon = sum(x.to_dense() for x in t)
    assert np.linalg.norm(G - recon) <= 1e-9 * np.linalg.norm(G)
    U = np.array([x.u for x in t])
    V = np.array([x.v for x in t])
    np.testing.assert_allclose(U @ U.T, np.eye(len(t)), atol=1e-12)
    np.testing.assert_allclose(V @ V.T, np.eye(len(t)), atol=1e-12)
    sig = [x.sigma for x in t]
    assert sig == sorted(sig, reverse=True)


def test_dense_svd_size_cap():
    with pytest.raises(ValidationError):
        dense_svd(np.ones((513, 2)))


# --- counterexample -------------------------------------------------------------


@pytest.mark.parametrize("l1, l2, d", [(math.pi**2, 4 * math.pi**2, 8), (1.0, 2.0, 2)])
def test_counterexample_reference_parameters(l1, l2, d):
    assert verify_counterexample(l1, l2, d, seed=0) <= 1e-10


def test_counterexample_term_is_not_eigen_form():
    D, F, term = counterexample_problem(1.0, 3.0, 6, seed=1)
    lam, Q = np.linalg.eigh(D.entries)
    coeffs = Q.T @ term.to_dense() @ Q
    # two nonzero entries in some row: not a single phi_k phi_k^T
    assert np.count_nonzero(np.abs(coeffs) > 1e-8) > 1


def test_counterexample_perturbation_detected():
    assert verify_counterexample(math.pi**2, 4 * math.pi**2, 8, seed=0, alpha1_shift=0.1) > 1e-3


@pytest.mark.parametrize("args", [(1.0, 1.0, 4), (0.0, 1.0, 4), (1.0, 2.0, 1)])
def test_counterexample_preconditions(args):
    with pytest.raises(PreconditionError):
        verify_counterexample(*args)


def test_eigen_rank_one_check():
    D = Operator1D(np.diag([1.0, 2.0, 3.0, 5.0]))
    assert eigen_rank_one_el_check(D, [1.0, 0.5, 0.25]) <= 1e-10
    assert eigen_rank_one_el_check(D, [0.0, 2.0]) <= 1e-12


def test_eigen_rank_one_check_needs_distinct_eigenvalues():
    with pytest.raises(PreconditionError):
        eigen_rank_one_el_check(Operator1D(np.eye(3)), [1.0])


def test_non_eigen_probes_fail_el(rng):
    D = Operator1D(np.diag([1.0, 2.0, 3.0]))
    g = np.diag([1.0, 0.5, 0.25])
    F = D.entries @ g + g @ D.entries
    for _ in range(10):
        term = RankOneTerm([rng.standard_normal(3), rng.standard_normal(3)])
        assert el_residual(term, F, D) > 1e-6


# --- recurrence bound and rate fit ------------------------------------------------


def _recurrence(A, a1, n):
    a = [a1]
    for _ in range(n - 1):
        a.append(a[-1] * (1 - a[-1] / A))
    return np.array(a)


def test_recurrence_equality_driven():
    assert recurrence_bound_check(_recurrence(2.0, 2.0, 200), 2.0)


def test_recurrence_geometric():
    A = 3.0
    assert recurrence_bound_check(A / 2.0 ** np.arange(1, 30), A)


def test_recurrence_hypothesis_fails():
    with pytest.raises(PreconditionError, match="hypothesis fails"):
        recurrence_bound_check([2.0, 0.1], 1.0)
    with pytest.raises(PreconditionError, match="hypothesis fails"):
        recurrence_bound_check([0.5, 0.5], 1.0)
    with pytest.raises(PreconditionError, match="hypothesis fails"):
        recurrence_bound_check([0.5], 0.0)


def test_recurrence_strict_mode_raises_on_conclusion():
    # the recurrence bound makes this unreachable from valid input; check the error type itself
    assert issubclass(ConclusionViolated, AssertionError)
    assert recurrence_bound_check([1.0, 0.0], 1.0, strict=True)


@given(
    st.floats(0.1, 100.0),
    st.floats(0.0, 1.0),
    st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60),
)
def test_recurrence_bound_holds_on_generated_sequences(A, frac, shrink):
    a = [frac * A]
    for c in shrink:
        a.append(c * a[-1] * (1 - a[-1] / A))
    assert recurrence_bound_check(a, A)


def test_fit_decay_exact_power_law():
    n = np.arange(1, 60)
    assert fit_decay_exponent(n**-0.5, skip=3) == pytest.approx(-0.5, abs=1e-6)
    assert fit_decay_exponent(np.full(20, 2.0)) == pytest.approx(0.0, abs=1e-12)


def test_fit_decay_validation():
    with pytest.raises(ValidationError):
        fit_decay_exponent([1.0, 0.5, 0.3], skip=0)
    with pytest.raises(ValidationError):
        fit_decay_exponent([1.0, 0.5, 0.3, 0.0, 0.1, 0.1], skip=0)
