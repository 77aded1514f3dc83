"""Pure and orthogonal greedy rank-one solvers for ``A(G) = F``."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DegenerateIterateError, SingularSystemError, ValidationError
from .fixed_point import FixedPointConfig, FixedPointDiagnostics, solve_rank_one
from .tensor import (
    Expansion,
    RankOneTerm,
    a_gram,
    a_inner,
    apply_operator,
    as_rhs,
    broadcast_operators,
    residual_recompute,
)

logger = logging.getLogger(__name__)

GALERKIN_MAX_CONDITION = 1e12
STALL_RTOL = 1e-14
STALL_COUNT = 3


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_TERMS = "max_terms_reached"
    STALLED = "stalled"


@dataclass(frozen=True)
class GreedyConfig:
    """Parameters of the outer greedy loop.

    ``el_accept_tol`` is the Euler-Lagrange residual below which a fixed
    point that ran out of sweeps is still accepted.
    """

    algorithm: str = "pure"
    eps: float = 1e-6
    max_terms: int = 500
    fixed_point: FixedPointConfig = field(default_factory=FixedPointConfig)
    restarts_per_term: int = 3
    el_accept_tol: float = 1e-4

    def __post_init__(self):
        if self.algorithm not in ("pure", "orthogonal"):
            raise ValidationError(f"algorithm must be 'pure' or 'orthogonal', got {self.algorithm!r}")
        if not self.eps > 0:
            raise ValidationError(f"eps must be positive, got {self.eps!r}")
        if not isinstance(self.max_terms, (int, np.integer)) or self.max_terms < 1:
            raise ValidationError(f"max_terms must be a positive integer, got {self.max_terms!r}")
        if not isinstance(self.restarts_per_term, (int, np.integer)) or self.restarts_per_term < 1:
            raise ValidationError(f"restarts_per_term must be a positive integer, got {self.restarts_per_term!r}")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    energy: float
    """Total energy ``E(U_n)`` of the current approximation."""
    step_energy: float
    """Energy of the accepted term, ``1/2 |T_n|_A^2 - F_{n-1} : T_n``."""
    term_a_norm: float
    residual_frobenius: float
    fixed_point_sweeps: int
    fixed_point_converged: bool
    galerkin_condition_estimate: float | None = None


@dataclass(frozen=True)
class SolveReport:
    trace: tuple
    termination: Termination
    expansion: Expansion
    initial_residual_frobenius: float = 0.0

    @property
    def n_terms(self) -> int:
        return len(self.expansion)

    @property
    def final_residual_frobenius(self) -> float:
        return self.trace[-1].residual_frobenius if self.trace else self.initial_residual_frobenius


@dataclass
class _Candidate:
    term: RankOneTerm
    diag: FixedPointDiagnostics
    step_energy: float


def _step_energy(term, residual, ops):
    return 0.5 * a_inner(term, term, ops) - float(np.vdot(residual.array, term.to_dense()))


def _best_candidate(ops, residual, cfg: GreedyConfig, rng, attempts):
    """Run ``attempts`` randomly initialised fixed points, keep the most negative step energy.

    Ties within 1e-12 (relative) keep the earlier restart.
    """
    best = None
    sweeps = 0
    for r in range(attempts):
        try:
            term, diag = solve_rank_one(ops, residual, cfg.fixed_point, rng)
        except DegenerateIterateError as exc:
            logger.debug("restart %d degenerate: %s", r, exc)
            continue
        sweeps += diag.sweeps_used
        if term.is_zero():
            continue
        if not diag.converged and not diag.el_residual_norm <= cfg.el_accept_tol:
            logger.debug("restart %d rejected: not converged, EL residual %.3e", r, diag.el_residual_norm)
            continue
        e = _step_energy(term, residual, ops)
        if best is None or e < best.step_energy - 1e-12 * abs(best.step_energy):
            best = _Candidate(term, diag, e)
    return best, sweeps


def galerkin_coefficients(terms, F, ops, *, return_condition=False):
    """Coefficients minimising the energy over ``span(terms)``.

    Solves ``M alpha = b`` with ``M[j, k] = <T_j, T_k>_A`` (that is
    ``T_j : A(T_k)``, which also covers non-symmetric operators) and
    ``b[j] = F : T_j``.

    The condition estimate is the 2-norm condition number of ``M`` after
    symmetric diagonal scaling to unit diagonal, so terms of very different
    magnitude do not count as dependent.

    Raises
    ------
    SingularSystemError
        If that estimate exceeds 1e12.
    """
    terms = list(terms)
    if not terms:
        raise ValidationError("galerkin_coefficients needs at least one term")
    if any(t.is_zero() for t in terms):
        raise ValidationError("galerkin_coefficients received a zero term")
    F = as_rhs(F)
    ops = broadcast_operators(ops, F.shape)
    M = a_gram(terms, terms, ops)
    b = np.array([F.frob_inner(t) for t in terms])
    # equilibrate so the estimate reflects linear dependence, not term scales
    w = 1.0 / np.sqrt(np.abs(np.diag(M)))
    Ms = M * np.outer(w, w)
    sv = np.linalg.svd(Ms, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond <= GALERKIN_MAX_CONDITION:
        raise SingularSystemError(f"Galerkin matrix condition estimate {cond:.3e} exceeds 1e12", cond)
    alpha = w * np.linalg.solve(Ms, w * b)
    if return_condition:
        return alpha, cond
    return alpha


def _greedy(ops, F, cfg: GreedyConfig, rng, orthogonal: bool) -> SolveReport:
    F = as_rhs(F)
    ops = broadcast_operators(ops, F.shape)
    rng = np.random.default_rng(rng)
    fro0 = F.frobenius_norm
    expansion = Expansion()
    residual = residual_recompute(F, expansion, ops)
    trace = []
    if fro0 <= cfg.eps:
        return SolveReport((), Termination.CONVERGED, expansion, fro0)

    terms = []
    small_streak = 0
    termination = Termination.MAX_TERMS
    for n in range(1, cfg.max_terms + 1):
        cand, sweeps_total = _best_candidate(ops, residual, cfg, rng, cfg.restarts_per_term)
        accepted = None
        cond = None
        failures = 0
        while cand is not None:
            if not orthogonal:
                accepted = (cand, None)
                break
            try:
                alpha, cond = galerkin_coefficients(terms + [cand.term], F, ops, return_condition=True)
            except SingularSystemError as exc:
                failures += 1
                logger.debug("term %d: %s (failure %d)", n, exc, failures)
                if failures >= cfg.restarts_per_term:
                    break
                # drop the candidate and try a fresh restart
                cand, sweeps = _best_candidate(ops, residual, cfg, rng, 1)
                sweeps_total += sweeps
                continue
            accepted = (cand, alpha)
            break
        if accepted is None:
            termination = Termination.STALLED
            logger.info("stalled at term %d: no acceptable rank-one correction", n)
            break
        cand, alpha = accepted
        terms.append(cand.term)
        expansion = Expansion(terms, alpha if orthogonal else None)
        residual = residual_recompute(F, expansion, ops)
        U = expansion.to_dense()
        energy = 0.5 * float(np.vdot(U, apply_operator(U, ops))) - float(np.vdot(F.array, U))
        term_a = math.sqrt(max(a_inner(cand.term, cand.term, ops), 0.0))
        trace.append(
            TraceRecord(
                iteration=n,
                energy=energy,
                step_energy=cand.step_energy,
                term_a_norm=term_a,
                residual_frobenius=residual.frobenius_norm,
                fixed_point_sweeps=sweeps_total,
                fixed_point_converged=cand.diag.converged,
                galerkin_condition_estimate=cond,
            )
        )
        if residual.frobenius_norm <= cfg.eps:
            termination = Termination.CONVERGED
            break
        small_streak = small_streak + 1 if term_a < STALL_RTOL * fro0 else 0
        if small_streak >= STALL_COUNT:
            termination = Termination.STALLED
            break
    return SolveReport(tuple(trace), termination, expansion, fro0)


def pure_greedy(ops, F, cfg: GreedyConfig | None = None, rng=None) -> SolveReport:
    """Pure greedy: append one Euler-Lagrange rank-one correction per iteration.

    Stops when the Frobenius norm of the residual ``F - A(U_n)`` is at most
    ``cfg.eps``, after ``cfg.max_terms`` terms, or when no acceptable term
    can be found.
    """
    cfg = cfg or GreedyConfig()
    if cfg.algorithm != "pure":
        cfg = replace(cfg, algorithm="pure")
    return _greedy(ops, F, cfg, rng, orthogonal=False)


def orthogonal_greedy(ops, F, cfg: GreedyConfig | None = None, rng=None) -> SolveReport:
    """Orthogonal greedy: like :func:`pure_greedy`, then re-fit all coefficients by Galerkin projection."""
    cfg = cfg or GreedyConfig(algorithm="orthogonal")
    if cfg.algorithm != "orthogonal":
        cfg = replace(cfg, algorithm="orthogonal")
    return _greedy(ops, F, cfg, rng, orthogonal=True)


def solve(ops, F, cfg: GreedyConfig | None = None, rng=None) -> SolveReport:
    cfg = cfg or GreedyConfig()
    if cfg.algorithm == "orthogonal":
        return orthogonal_greedy(ops, F, cfg, rng)
    return pure_greedy(ops, F, cfg, rng)


# ---------------------------------------------------------------------------
# optimality probes


def _random_factor(rng, n):
    return rng.uniform(-1.0, 1.0, n)


def check_first_order(term: RankOneTerm, g_residual, ops, probes: int = 20, seed=None) -> float:
    """Largest normalised violation of ``<g_n, r (x) s_n + r_n (x) s>_A = 0`` over random probes.

    ``g_residual`` is the error ``g_n = G - U_n`` (dense), typically obtained
    from the dense oracle. Only two-dimensional terms are supported.
    """
    g = np.asarray(g_residual, dtype=float)
    if term.ndim != 2 or g.ndim != 2:
        raise ValidationError("check_first_order supports two-dimensional problems only")
    ops = broadcast_operators(ops, g.shape)
    rng = np.random.default_rng(seed)
    rn, sn = term.factors
    Ag = apply_operator(g, ops)
    g_norm = math.sqrt(max(float(np.vdot(g, Ag)), 0.0))
    worst = 0.0
    for _ in range(probes):
        r = _random_factor(rng, rn.size)
        s = _random_factor(rng, sn.size)
        X = np.outer(r, sn) + np.outer(rn, s)
        num = abs(float(np.vdot(Ag, X)))
        den = g_norm * math.sqrt(max(float(np.vdot(X, apply_operator(X, ops))), 0.0))
        if den == 0:
            continue
        worst = max(worst, num / den)
    return worst


def check_second_order(term: RankOneTerm, g_n, ops, probes: int = 20, seed=None, extra_probes=()) -> float:
    """Worst relative margin of the second-order optimality inequality.

    For each probe ``(r, s)`` evaluates

        LHS = <r_n (x) s_n - g_n, r (x) s>_A ** 2
        RHS = |r (x) s_n|_A^2 * |r_n (x) s|_A^2

    and returns ``min (RHS - LHS) / RHS``. A negative value means the term
    is not a local minimiser. ``extra_probes`` are ``(r, s)`` pairs checked in
    addition to the random ones.
    """
    g = np.asarray(g_n, dtype=float)
    if term.ndim != 2 or g.ndim != 2:
        raise ValidationError("check_second_order supports two-dimensional problems only")
    ops = broadcast_operators(ops, g.shape)
    rng = np.random.default_rng(seed)
    rn, sn = term.factors
    diff = term.to_dense() - g
    Adiff_T = apply_operator(diff, ops)
    pairs = [(_random_factor(rng, rn.size), _random_factor(rng, sn.size)) for _ in range(probes)]
    pairs.extend((np.asarray(r, float), np.asarray(s, float)) for r, s in extra_probes)
    worst = float("inf")
    for r, s in pairs:
        lhs = float(np.vdot(Adiff_T, np.outer(r, s))) ** 2
        a1 = a_inner(RankOneTerm((r, sn)), RankOneTerm((r, sn)), ops)
        a2 = a_inner(RankOneTerm((rn, s)), RankOneTerm((rn, s)), ops)
        rhs = a1 * a2
        if rhs == 0:
            margin = 0.0 if lhs == 0 else -float("inf")
        else:
            margin = (rhs - lhs) / rhs
        worst = min(worst, margin)
    return worst


def selection_dominance(term: RankOneTerm, g_prev, ops, probes: int = 20, seed=None) -> float:
    """Smallest ``|T_n|_A - <r (x) s, g_{n-1}>_A / |r (x) s|_A`` over random probes.

    A negative value is a probe that correlates better with ``g_{n-1}`` than
    the accepted term, which a true minimiser never allows.
    """
    g = np.asarray(g_prev, dtype=float)
    ops = broadcast_operators(ops, g.shape)
    rng = np.random.default_rng(seed)
    tn = math.sqrt(max(a_inner(term, term, ops), 0.0))
    Ag = apply_operator(g, ops)
    worst = float("inf")
    for _ in range(probes):
        factors = [_random_factor(rng, n) for n in g.shape]
        p = RankOneTerm(factors)
        pn = math.sqrt(max(a_inner(p, p, ops), 0.0))
        worst = min(worst, tn - float(np.vdot(Ag, p.to_dense())) / pn)
    return worst
