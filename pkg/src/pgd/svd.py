"""Greedy rank-one decomposition in the Frobenius metric (identity operators).

Dropping the operator turns each greedy step into a best rank-one
approximation of the current remainder ``G_{n-1}``, and the alternating
fixed point

    |S|^2 R = G S,     |R|^2 S = G^T R

into a power iteration on ``G^T G``. The functions here exist to exhibit
that structure; they are not a replacement for a production SVD.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import BreakdownError, PreconditionError, SlowConvergenceWarning, StalledError, ValidationError
from .fixed_point import FixedPointConfig, FixedPointDiagnostics
from .tensor import RankOneTerm

SLOW_CONTRACTION = 0.99


@dataclass(frozen=True)
class SvdTriplet:
    sigma: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        v = np.array(self.v, dtype=float)
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.sigma < 0:
            raise ValidationError(f"sigma must be non-negative, got {self.sigma}")

    @classmethod
    def from_factors(cls, R, S) -> "SvdTriplet":
        nr, ns = float(np.linalg.norm(R)), float(np.linalg.norm(S))
        if nr == 0 or ns == 0:
            raise ValidationError("cannot normalise a zero factor")
        return cls(nr * ns, R / nr, S / ns)

    def to_dense(self) -> np.ndarray:
        return self.sigma * np.outer(self.u, self.v)

    def as_term(self) -> RankOneTerm:
        """Balanced rank-one term ``(sqrt(sigma) u, sqrt(sigma) v)``."""
        c = math.sqrt(self.sigma)
        return RankOneTerm((c * self.u, c * self.v))


def _check_matrix(G):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.size == 0:
        raise ValidationError(f"expected a non-empty matrix, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValidationError("matrix has non-finite entries")
    return G


def _initial_vector(cfg: FixedPointConfig, q: int, rng):
    if isinstance(cfg.init, RankOneTerm):
        S = np.array(cfg.init.factors[1], dtype=float)
        if S.size != q:
            raise ValidationError(f"initial S has length {S.size}, expected {q}")
        return S
    if cfg.init == "ones":
        return np.ones(q)
    return np.random.default_rng(rng).uniform(-1.0, 1.0, q)


def alternating_rank_one(G, S0, cfg: FixedPointConfig | None = None, *, history=None):
    """Alternate ``R = G S / |S|^2`` and ``S = G^T R / |R|^2`` from ``S0``.

    Returns ``(R, S, diagnostics)``. Stops when the relative Frobenius change
    of ``R S^T`` is at most ``cfg.rel_tol``. ``history`` collects the
    ``S`` iterates when given.
    """
    cfg = cfg or FixedPointConfig()
    G = _check_matrix(G)
    S = np.asarray(S0, dtype=float).copy()
    if not np.any(S):
        raise PreconditionError("initial vector is zero")
    R = np.zeros(G.shape[0])
    prev = None
    change = float("inf")
    last = float("nan")
    contraction = float("nan")
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        R = (G @ S) / float(S @ S)
        rr = float(R @ R)
        if rr == 0:
            raise BreakdownError(f"G S vanished at sweep {sweeps}")
        S = (G.T @ R) / rr
        if history is not None:
            history.append(S.copy())
        T = np.outer(R, S)
        if prev is not None:
            change = float(np.linalg.norm(T - prev) / np.linalg.norm(T))
            if np.isfinite(last) and last > 0:
                contraction = change / last
            last = change
            if change <= cfg.rel_tol:
                converged = True
                break
        prev = T
    resid = math.hypot(
        float(np.linalg.norm(float(S @ S) * R - G @ S)),
        float(np.linalg.norm(float(R @ R) * S - G.T @ R)),
    )
    scale = float(np.linalg.norm(G)) * float(np.linalg.norm(R)) * float(np.linalg.norm(S))
    diag = FixedPointDiagnostics(
        sweeps_used=sweeps,
        final_rel_change=change,
        converged=converged,
        el_residual_norm=resid / scale if scale > 0 else resid,
        contraction_estimate=contraction,
    )
    return R, S, diag


def power_method(G, S0, cfg: FixedPointConfig | None = None, *, history=None):
    """Explicit recursion ``S <- (G^T G) S |S|^2 / |G S|^2``.

    Returns ``(triplet, sweeps)`` where the triplet is ``(|G v|, G v / |G v|, v)``
    with ``v = S / |S|`` at the limit. ``history`` collects the iterates.

    Raises
    ------
    BreakdownError
        If ``G S`` vanishes (``S0`` orthogonal to the row space of ``G``).
    """
    cfg = cfg or FixedPointConfig()
    G = _check_matrix(G)
    S = np.asarray(S0, dtype=float).copy()
    if S.shape != (G.shape[1],):
        raise ValidationError(f"S0 must have length {G.shape[1]}")
    if not np.any(S):
        raise PreconditionError("S0 must be non-zero")
    GtG = G.T @ G
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        GS = G @ S
        gs2 = float(GS @ GS)
        if gs2 == 0:
            raise BreakdownError(f"G S vanished at sweep {sweeps}")
        S_new = (GtG @ S) * (float(S @ S) / gs2)
        if history is not None:
            history.append(S_new.copy())
        change = float(np.linalg.norm(S_new - S) / np.linalg.norm(S_new))
        S = S_new
        if change <= cfg.rel_tol:
            break
    v = S / np.linalg.norm(S)
    Gv = G @ v
    sigma = float(np.linalg.norm(Gv))
    if sigma == 0:
        raise BreakdownError("limit vector lies in the null space of G")
    return SvdTriplet(sigma, Gv / sigma, v), sweeps


def svd_greedy_decompose(G, eps: float, max_terms: int, cfg: FixedPointConfig | None = None, rng=None,
                         *, return_diagnostics: bool = False):
    """Greedy rank-one decomposition ``G = sum_n sigma_n u_n v_n^T``.

    Each step runs :func:`alternating_rank_one` on the remainder and
    subtracts the result. Stops once ``|G_n|_F <= eps`` or after
    ``max_terms`` terms.

    Raises
    ------
    StalledError
        When a step breaks down; ``exc.partial`` holds the triplets found so far.
    """
    cfg = cfg or FixedPointConfig()
    G = _check_matrix(G)
    if not eps > 0:
        raise ValidationError(f"eps must be positive, got {eps!r}")
    if max_terms < 1:
        raise ValidationError(f"max_terms must be positive, got {max_terms!r}")
    rng = np.random.default_rng(rng)
    remainder = G.copy()
    triplets, diags = [], []
    while len(triplets) < max_terms and np.linalg.norm(remainder) > eps:
        S0 = _initial_vector(cfg, G.shape[1], rng)
        try:
            R, S, diag = alternating_rank_one(remainder, S0, cfg)
        except (BreakdownError, PreconditionError) as exc:
            raise StalledError(f"term {len(triplets) + 1}: {exc}", partial=triplets) from exc
        if not diag.converged:
            msg = f"term {len(triplets) + 1}: fixed point not converged after {diag.sweeps_used} sweeps"
            if diag.contraction_estimate > SLOW_CONTRACTION:
                msg += f" (contraction estimate {diag.contraction_estimate:.4f}, near-degenerate spectrum)"
            warnings.warn(msg, SlowConvergenceWarning, stacklevel=2)
        triplets.append(SvdTriplet.from_factors(R, S))
        diags.append(diag)
        remainder = remainder - np.outer(R, S)
    if return_diagnostics:
        return triplets, diags
    return triplets


class OrthogonalityReport(NamedTuple):
    max_abs_inner: float
    partial_sum_violation: float


def check_svd_orthogonality(triplets, scale=None) -> OrthogonalityReport:
    """Pairwise orthogonality of extracted factors and the partial-sum identities.

    ``max_abs_inner`` is ``max_{n != m} max(|u_n . u_m|, |v_n . v_m|)``.
    ``partial_sum_violation`` is the largest normalised value of

        (sum_{k=l}^{n} r_k s_k^T) : (r_n s_{l-1}^T)   and
        (sum_{k=l}^{n} r_k s_k^T) : (r_{l-1} s_n^T)

    over ``2 <= l <= n``, with ``r_k = sqrt(c_k) u_k``, ``s_k = sqrt(c_k) v_k``
    and ``c_k`` taken from ``scale`` (defaults to the sigmas).
    """
    triplets = list(triplets)
    if len(triplets) < 2:
        raise ValidationError("need at least two triplets")
    U = np.stack([t.u for t in triplets])
    V = np.stack([t.v for t in triplets])
    c = np.array([t.sigma for t in triplets] if scale is None else scale, dtype=float)
    if c.size != len(triplets):
        raise ValidationError("scale must have one entry per triplet")
    Gu, Gv = U @ U.T, V @ V.T
    off = ~np.eye(len(triplets), dtype=bool)
    max_inner = float(max(np.abs(Gu[off]).max(), np.abs(Gv[off]).max()))

    root = np.sqrt(np.abs(c))
    R = root[:, None] * U * np.sign(c)[:, None]
    S = root[:, None] * V
    worst = 0.0
    n_terms = len(triplets)
    for n in range(1, n_terms):
        for l in range(1, n + 1):
            block = R[l : n + 1].T @ S[l : n + 1]
            norm_block = float(np.linalg.norm(block))
            for r, s in ((R[n], S[l - 1]), (R[l - 1], S[n])):
                denom = norm_block * float(np.linalg.norm(r)) * float(np.linalg.norm(s))
                if denom > 0:
                    worst = max(worst, abs(float(r @ block @ s)) / denom)
    return OrthogonalityReport(max_inner, worst)
