"""Alternating fixed point for the rank-one Euler-Lagrange system.

With every factor but the k-th frozen, the stationarity condition in factor
``k`` is the linear system

    (a_k B_k + b_k I) f_k = F x_{i != k} f_i

with ``a_k = prod_{i != k} |f_i|^2`` and
``b_k = sum_{j != k} (f_j^T B_j f_j) prod_{i != j, k} |f_i|^2``.
For N = 2 this is ``(|S|^2 D + |S|_D^2 I) R = F S`` and its transpose
counterpart. One sweep solves these systems for k = 1..N in order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .exceptions import DegenerateIterateError, PreconditionError, ValidationError
from .tensor import (
    Operator1D,
    RankOneTerm,
    ResidualState,
    broadcast_operators,
    contract_all,
)


@dataclass(frozen=True)
class FixedPointConfig:
    """Stopping and initialisation parameters for :func:`solve_rank_one`.

    ``init`` is ``"random"`` (componentwise uniform(-1, 1) drawn from the
    generator passed to the solver), ``"ones"``, or a :class:`RankOneTerm`.
    """

    max_sweeps: int = 500
    rel_tol: float = 1e-8
    init: object = "random"
    normalize_each_sweep: bool = True

    def __post_init__(self):
        if not isinstance(self.max_sweeps, (int, np.integer)) or self.max_sweeps < 1:
            raise ValidationError(f"max_sweeps must be a positive integer, got {self.max_sweeps!r}")
        if not 0 < self.rel_tol < 1:
            raise ValidationError(f"rel_tol must lie in (0, 1), got {self.rel_tol!r}")
        if not isinstance(self.init, RankOneTerm) and self.init not in ("random", "ones"):
            raise ValidationError(f"init must be 'random', 'ones' or a RankOneTerm, got {self.init!r}")


@dataclass(frozen=True)
class FixedPointDiagnostics:
    sweeps_used: int
    final_rel_change: float
    converged: bool
    el_residual_norm: float
    contraction_estimate: float = float("nan")


class _Frame:
    """Per-dimension solver for ``(a B + b I) x = y``.

    Exactly symmetric operators are handled in their eigenbasis, where the
    shifted system is diagonal; others fall back to a dense solve.
    """

    def __init__(self, op: Operator1D):
        self.op = op
        if op.is_symmetric:
            self.lam, self.Q = op.spectrum
        else:
            self.lam, self.Q = None, None

    def to_local(self, x):
        return x if self.Q is None else self.Q.T @ x

    def to_global(self, x):
        return x if self.Q is None else self.Q @ x

    def quad(self, x) -> float:
        if self.lam is not None:
            return float((x * x) @ self.lam)
        return self.op.quad(x)

    def apply(self, x):
        if self.lam is not None:
            return self.lam * x
        return self.op.entries @ x

    def solve(self, a: float, b: float, y):
        if self.lam is not None:
            return y / (a * self.lam + b)
        return np.linalg.solve(a * self.op.entries + b * np.eye(self.op.d), y)


def _coefficients(norms2, quads, k):
    N = len(norms2)
    if N == 2:
        return norms2[1 - k], quads[1 - k]
    a = math.prod(norms2[i] for i in range(N) if i != k)
    b = 0.0
    for j in range(N):
        if j == k:
            continue
        b += quads[j] * math.prod(norms2[i] for i in range(N) if i not in (j, k))
    return a, b


def _initial_factors(cfg: FixedPointConfig, shape, rng):
    if isinstance(cfg.init, RankOneTerm):
        if cfg.init.shape != tuple(shape):
            raise ValidationError(f"initial term has shape {cfg.init.shape}, residual has {tuple(shape)}")
        return [np.array(f, dtype=float) for f in cfg.init.factors]
    if cfg.init == "ones":
        return [np.ones(n) for n in shape]
    rng = np.random.default_rng(rng)
    return [rng.uniform(-1.0, 1.0, n) for n in shape]


def _diff_norm2(new, old) -> float:
    """``|new_1 x ... x new_N - old_1 x ... x old_N|_F^2`` without densifying.

    Telescopes the difference as a sum of rank-one terms each carrying one
    factor difference, so no large quantities are subtracted.
    """
    N = len(new)
    deltas = [n - o for n, o in zip(new, old)]
    if N == 2:
        d0, d1 = deltas
        total = (d0 @ d0) * (new[1] @ new[1]) + (old[0] @ old[0]) * (d1 @ d1) + 2.0 * (d0 @ old[0]) * (new[1] @ d1)
        return max(float(total), 0.0)
    # term k: old_1..old_{k-1}, delta_k, new_{k+1}..new_N
    def vec(t, i):
        return old[i] if i < t else (deltas[i] if i == t else new[i])
    total = 0.0
    for t in range(N):
        for u in range(t, N):
            ip = 1.0
            for i in range(N):
                ip *= float(vec(t, i) @ vec(u, i))
            total += ip if t == u else 2.0 * ip
    return max(total, 0.0)


def _as_array(residual):
    if isinstance(residual, ResidualState):
        return np.asarray(residual.array), residual.frobenius_norm
    arr = np.asarray(residual, dtype=float)
    return arr, float(np.linalg.norm(arr))


def solve_rank_one(ops, residual, cfg: FixedPointConfig | None = None, rng=None, *, trace=None):
    """Find a rank-one term satisfying the Euler-Lagrange equations for ``residual``.

    Parameters
    ----------
    ops : Operator1D or sequence of Operator1D
        One operator per dimension (a single operator is shared).
    residual : ResidualState or array
        Current residual ``F_{n-1}``.
    cfg : FixedPointConfig
    rng : numpy Generator or seed
        Source of the random initial guess.
    trace : list, optional
        If given, the factors (in original coordinates) after every sweep
        are appended to it.

    Returns
    -------
    term : RankOneTerm
        Balanced so that all factors share the same Euclidean norm.
    diagnostics : FixedPointDiagnostics
        ``converged`` is False when ``max_sweeps`` ran out; the returned term
        is then the iterate with the lowest rank-one objective seen.
    """
    cfg = cfg or FixedPointConfig()
    F, fro = _as_array(residual)
    if fro == 0:
        raise PreconditionError("residual is zero; there is no rank-one correction to find")
    ops = broadcast_operators(ops, F.shape)
    N = F.ndim
    frames = [_Frame(op) for op in ops]

    Fh = F
    for k, fr in enumerate(frames):
        if fr.Q is not None:
            Fh = np.moveaxis(np.tensordot(fr.Q.T, Fh, axes=(1, k)), 0, k)

    factors = [fr.to_local(f) for fr, f in zip(frames, _initial_factors(cfg, F.shape, rng))]
    norms2 = [float(f @ f) for f in factors]
    quads = [fr.quad(f) for fr, f in zip(frames, factors)]
    change = float("inf")
    last_change = float("nan")
    contraction = float("nan")
    best = None
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        old = list(factors)
        for k in range(N):
            a, b = _coefficients(norms2, quads, k)
            if a == 0 and b == 0:
                raise DegenerateIterateError(
                    f"all frozen factors vanished at sweep {sweeps}; the system for factor {k} is singular"
                )
            rhs = _contract(Fh, factors, k)
            factors[k] = frames[k].solve(a, b, rhs)
            norms2[k] = float(factors[k] @ factors[k])
            quads[k] = frames[k].quad(factors[k])
        # F : T from the last right-hand side, before rebalancing changes the factors
        objective = _objective(norms2, quads, float(rhs @ factors[N - 1]))
        tn2 = math.prod(norms2)
        if tn2 == 0:
            raise DegenerateIterateError(f"iterate collapsed to zero at sweep {sweeps}")
        if cfg.normalize_each_sweep:
            target = tn2 ** (1.0 / (2 * N))
            for k in range(N):
                c = target / math.sqrt(norms2[k])
                factors[k] = factors[k] * c
                norms2[k] *= c * c
                quads[k] *= c * c
        change = math.sqrt(_diff_norm2(factors, old) / tn2)
        if math.isfinite(last_change) and last_change > 0:
            contraction = change / last_change
        last_change = change
        if trace is not None:
            trace.append([fr.to_global(f) for fr, f in zip(frames, factors)])
        if change <= cfg.rel_tol:
            converged = True
            break
        if best is None or objective <= best[0]:
            best = (objective, list(factors), change)

    if not converged and best is not None:
        factors, change = best[1], best[2]

    term = RankOneTerm([fr.to_global(f) for fr, f in zip(frames, factors)]).balanced()
    diag = FixedPointDiagnostics(
        sweeps_used=sweeps,
        final_rel_change=change,
        converged=converged,
        el_residual_norm=el_residual(term, residual, ops),
        contraction_estimate=contraction,
    )
    return term, diag


def _objective(norms2, quads, f_dot_t):
    """``1/2 <T, T>_A - F : T`` from factor norms and quadratic forms."""
    N = len(norms2)
    if N == 2:
        return 0.5 * (quads[0] * norms2[1] + quads[1] * norms2[0]) - f_dot_t
    half_a = 0.5 * sum(quads[k] * math.prod(norms2[i] for i in range(N) if i != k) for k in range(N))
    return half_a - f_dot_t


def _contract(F, factors, k):
    if F.ndim == 2:
        return F @ factors[1] if k == 0 else factors[0] @ F
    return contract_all(F, factors, skip=k)


def el_blocks(term: RankOneTerm, residual, ops):
    """Per-factor left and right sides of the Euler-Lagrange system."""
    F, _ = _as_array(residual)
    ops = broadcast_operators(ops, F.shape)
    if term.shape != F.shape:
        raise ValidationError(f"term shape {term.shape} does not match residual shape {F.shape}")
    factors = [np.asarray(f) for f in term.factors]
    norms2 = [float(f @ f) for f in factors]
    quads = [op.quad(f) for op, f in zip(ops, factors)]
    out = []
    for k, op in enumerate(ops):
        a, b = _coefficients(norms2, quads, k)
        lhs = a * op.apply(factors[k]) + b * factors[k]
        rhs = contract_all(F, factors, skip=k)
        out.append((lhs, rhs))
    return out


def el_residual(term: RankOneTerm, residual, ops) -> float:
    """Scale-free violation of the Euler-Lagrange system.

    Block ``k`` (left minus right side of the k-th equation) is divided by
    ``|F| prod_{i != k} |f_i|``, the natural size of its right-hand side, so
    the value is unchanged by rescaling the residual or redistributing the
    scale among factors. Returns the Euclidean norm of the scaled blocks.
    """
    F, fro = _as_array(residual)
    blocks = el_blocks(term, F, ops)
    norms = [float(np.linalg.norm(f)) for f in term.factors]
    total = 0.0
    for k, (lhs, rhs) in enumerate(blocks):
        scale = fro * math.prod(norms[i] for i in range(len(norms)) if i != k)
        diff = float(np.linalg.norm(lhs - rhs))
        if scale > 0:
            total += (diff / scale) ** 2
        else:
            total += diff**2
    return math.sqrt(total)
