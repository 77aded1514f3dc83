import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pgd.exceptions import DegenerateIterateError, PreconditionError, ValidationError
from pgd.fixed_point import FixedPointConfig, el_blocks, el_residual, solve_rank_one
from pgd.tensor import (
    Operator1D,
    OperatorKind,
    RankOneTerm,
    ResidualState,
    a_inner,
    advection_diffusion_operator,
    apply_operator,
    build_operator,
)

from conftest import random_spd


def objective(factors, F, ops):
    t = RankOneTerm(factors)
    return 0.5 * a_inner(t, t, ops) - float(np.vdot(F, t.to_dense()))


@pytest.mark.parametrize("kind", ["diag_linspace", "fd_laplacian"])
def test_exact_rank_one_datum_recovered(kind, rng):
    D = build_operator(kind, 7)
    r, s = rng.standard_normal(7), rng.standard_normal(7)
    F = apply_operator(np.outer(r, s), D)
    term, diag = solve_rank_one(D, ResidualState(F), FixedPointConfig(rel_tol=1e-12), rng)
    assert diag.converged
    np.testing.assert_allclose(term.to_dense(), np.outer(r, s), rtol=1e-9, atol=1e-9 * np.abs(np.outer(r, s)).max())
    assert diag.el_residual_norm <= 1e-10
    n0, n1 = (np.linalg.norm(f) for f in term.factors)
    assert n0 == pytest.approx(n1, rel=1e-12)


def test_exact_rank_one_three_dimensions(rng):
    ops = [random_spd(4, rng), random_spd(3, rng), random_spd(5, rng)]
    factors = [rng.standard_normal(n) for n in (4, 3, 5)]
    target = RankOneTerm(factors).to_dense()
    F = apply_operator(target, ops)
    term, diag = solve_rank_one(ops, F, FixedPointConfig(rel_tol=1e-12, max_sweeps=2000), rng)
    assert diag.converged
    np.testing.assert_allclose(term.to_dense(), target, atol=1e-8 * np.abs(target).max())
    assert el_residual(term, F, ops) <= 1e-9


def test_exact_rank_one_nonsymmetric(rng):
    D = build_operator("fd_laplacian", 6)
    B = advection_diffusion_operator(D, 0.5, rng)
    r, s = rng.uniform(0.5, 1.5, 6), rng.uniform(0.5, 1.5, 6)
    F = B.entries @ np.outer(r, s) + np.outer(r, s) @ B.entries.T
    term, diag = solve_rank_one(B, F, FixedPointConfig(rel_tol=1e-13, max_sweeps=2000), rng)
    assert diag.converged
    np.testing.assert_allclose(term.to_dense(), np.outer(r, s), atol=1e-8)


def test_svd_mode_top_pair():
    I = build_operator("identity", 2)
    G = np.diag([3.0, 1.0])
    term, diag = solve_rank_one(I, G, FixedPointConfig(rel_tol=1e-13, init="ones"))
    # A = 2 Id so the EL solution is half the best rank-one approximation
    np.testing.assert_allclose(term.to_dense(), np.diag([1.5, 0.0]), atol=1e-9)


def test_svd_mode_orthogonal_init_finds_subdominant_pair():
    I = build_operator("identity", 2)
    G = np.diag([3.0, 1.0])
    init = RankOneTerm([np.array([0.0, 1.0]), np.array([0.0, 1.0])])
    term, diag = solve_rank_one(I, G, FixedPointConfig(init=init))
    assert diag.converged
    T = term.to_dense()
    # no dominant component can ever appear
    assert T[0, 0] == 0.0 and T[0, 1] == 0.0 and T[1, 0] == 0.0
    assert T[1, 1] == pytest.approx(0.5, rel=1e-15)


def test_svd_mode_iterates_follow_power_recursion(rng):
    G = rng.standard_normal((6, 5))
    I6, I5 = build_operator("identity", 6), build_operator("identity", 5)
    S0 = rng.uniform(-1, 1, 5)
    init = RankOneTerm([np.ones(6), S0])
    trace = []
    cfg = FixedPointConfig(max_sweeps=30, rel_tol=1e-15, init=init, normalize_each_sweep=False)
    solve_rank_one([I6, I5], G, cfg, trace=trace)
    S = S0.copy()
    for factors in trace:
        S = (G.T @ G @ S) * (S @ S) / np.linalg.norm(G @ S) ** 2
        np.testing.assert_allclose(factors[1], S, rtol=1e-12)


def test_objective_non_increasing_per_sweep(rng):
    D = build_operator("fd_laplacian", 8)
    F = rng.uniform(size=(8, 8))
    trace = []
    solve_rank_one(D, F, FixedPointConfig(max_sweeps=40, rel_tol=1e-14), rng, trace=trace)
    values = [objective(f, F, D) for f in trace]
    assert np.all(np.diff(values) <= 1e-10)


def test_half_sweep_is_exact_minimiser(rng):
    # after a full sweep S solves its EL equation exactly for the current R
    D = build_operator("diag_linspace", 6)
    F = rng.uniform(size=(6, 6))
    trace = []
    solve_rank_one(D, F, FixedPointConfig(max_sweeps=3, rel_tol=1e-15, normalize_each_sweep=False), rng, trace=trace)
    R, S = trace[-1]
    grad_s = (R @ R) * D.entries @ S + (R @ D.entries @ R) * S - F.T @ R
    assert np.linalg.norm(grad_s) <= 1e-12 * np.linalg.norm(F) * np.linalg.norm(R)


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_scale_invariance(c, seed):
    D = build_operator("diag_linspace", 5)
    F = np.random.default_rng(seed).uniform(size=(5, 5))
    cfg = FixedPointConfig(max_sweeps=200)
    t1, d1 = solve_rank_one(D, F, cfg, seed)
    t2, d2 = solve_rank_one(D, c * F, cfg, seed)
    assert d1.sweeps_used == d2.sweeps_used
    np.testing.assert_allclose(t2.to_dense(), c * t1.to_dense(), rtol=1e-10, atol=1e-10 * c * np.abs(t1.to_dense()).max())


@given(st.integers(0, 10_000))
def test_converged_implies_small_el_residual(seed):
    rng = np.random.default_rng(seed)
    D = build_operator("fd_laplacian", 6)
    F = rng.uniform(size=(6, 6))
    cfg = FixedPointConfig(rel_tol=1e-8, max_sweeps=2000)
    term, diag = solve_rank_one(D, F, cfg, rng)
    if diag.converged:
        assert diag.final_rel_change <= cfg.rel_tol
        assert diag.el_residual_norm <= 10 * cfg.rel_tol


def test_nonconverged_reports_best_iterate(rng):
    D = build_operator("diag_linspace", 10)
    F = rng.uniform(size=(10, 10))
    term, diag = solve_rank_one(D, F, FixedPointConfig(max_sweeps=1, rel_tol=1e-14), rng)
    assert not diag.converged and diag.sweeps_used == 1
    assert not term.is_zero()


def test_zero_residual_is_precondition_error():
    D = build_operator("identity", 3)
    with pytest.raises(PreconditionError):
        solve_rank_one(D, np.zeros((3, 3)))


def test_zero_initial_factors_degenerate():
    D = build_operator("identity", 3)
    init = RankOneTerm([np.ones(3), np.zeros(3)])
    with pytest.raises(DegenerateIterateError):
        solve_rank_one(D, np.ones((3, 3)), FixedPointConfig(init=init))


def test_init_shape_mismatch():
    D = build_operator("identity", 3)
    init = RankOneTerm([np.ones(2), np.ones(3)])
    with pytest.raises(ValidationError):
        solve_rank_one(D, np.ones((3, 3)), FixedPointConfig(init=init))


@pytest.mark.parametrize("kwargs", [{"max_sweeps": 0}, {"rel_tol": 0.0}, {"rel_tol": 1.0}, {"init": "zeros"}])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        FixedPointConfig(**kwargs)


def test_el_residual_singular_triplet_is_zero(rng):
    G = rng.standard_normal((5, 4))
    U, sig, Vt = np.linalg.svd(G, full_matrices=False)
    I5, I4 = build_operator("identity", 5), build_operator("identity", 4)
    for k in range(4):
        # A = 2 Id: the stationary term is sigma/2 u v^T
        c = np.sqrt(sig[k] / 2)
        term = RankOneTerm([c * U[:, k], c * Vt[k]])
        assert el_residual(term, G, [I5, I4]) <= 1e-10


def test_el_residual_random_term_positive():
    D = build_operator("fd_laplacian", 5)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        term = RankOneTerm([rng.standard_normal(5), rng.standard_normal(5)])
        assert el_residual(term, rng.uniform(size=(5, 5)), D) > 1e-6


def test_el_residual_scale_free(rng):
    D = build_operator("fd_laplacian", 5)
    F = rng.uniform(size=(5, 5))
    term = RankOneTerm([rng.standard_normal(5), rng.standard_normal(5)])
    base = el_residual(term, F, D)
    moved = RankOneTerm([3.0 * term.factors[0], term.factors[1] / 3.0])
    assert el_residual(moved, F, D) == pytest.approx(base, rel=1e-12)


def test_el_blocks_shapes(rng):
    ops = [build_operator("identity", 3), build_operator("identity", 4)]
    term = RankOneTerm([np.ones(3), np.ones(4)])
    blocks = el_blocks(term, np.ones((3, 4)), ops)
    assert [b[0].shape for b in blocks] == [(3,), (4,)]


def test_nonsymmetric_path_matches_symmetric_when_antisymmetric_part_zero(rng):
    D = Operator1D(np.diag([1.0, 2.0, 3.0]))
    B = Operator1D(D.entries, OperatorKind.NONSYMMETRIC)
    F = rng.uniform(size=(3, 3))
    t1, _ = solve_rank_one(D, F, rng=7)
    t2, _ = solve_rank_one(B, F, rng=7)
    assert np.array_equal(t1.to_dense(), t2.to_dense())
