"""Operators, separated representations and the energy-norm algebra.

The discrete problem is the Kronecker-sum equation ``A(G) = F`` where, for
``N`` one-dimensional operators ``B_1, ..., B_N``,

    A(U) = sum_k  B_k  applied along mode k of U.

For ``N = 2`` this is ``B U + U B^T`` (``D U + U D`` when ``D`` is symmetric).
The bilinear form used everywhere is ``<X, Y>_A = X : A(Y)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .exceptions import DimensionMismatchError, MatrixFileError, ValidationError

MAX_DENSE_NDIM = 4
MAX_DENSE_SIZE = 10**7
SYMMETRY_RTOL = 1e-12


class OperatorKind(str, enum.Enum):
    SPD = "symmetric_positive_definite"
    NONSYMMETRIC = "nonsymmetric"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Operator1D:
    """A ``d x d`` matrix acting as a one-dimensional differential operator."""

    entries: np.ndarray
    kind: OperatorKind = OperatorKind.SPD

    def __post_init__(self):
        entries = _frozen(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 1:
            raise ValidationError(f"operator must be a non-empty square matrix, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValidationError("operator entries must be finite")
        kind = OperatorKind(self.kind)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "kind", kind)
        if kind is OperatorKind.SPD:
            scale = max(np.abs(entries).max(), np.finfo(float).tiny)
            if np.abs(entries - entries.T).max() > SYMMETRY_RTOL * scale:
                raise ValidationError("operator declared SPD is not symmetric")
            lam_min = float(np.min(self.spectrum[0]))
            if lam_min <= 0:
                raise ValidationError(f"operator declared SPD has smallest eigenvalue {lam_min:.3e} <= 0")

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def is_symmetric(self) -> bool:
        """Exact (bitwise) symmetry; decides which solver path is taken."""
        return bool(np.array_equal(self.entries, self.entries.T))

    @cached_property
    def is_diagonal(self) -> bool:
        return bool(np.count_nonzero(self.entries - np.diag(np.diag(self.entries))) == 0)

    @cached_property
    def spectrum(self):
        """``(eigenvalues, eigenvectors)`` of the symmetric part.

        For diagonal operators the eigenvalues are the diagonal in place
        (unsorted) and eigenvectors is None.
        """
        if self.is_diagonal:
            return np.diag(self.entries).copy(), None
        sym = 0.5 * (self.entries + self.entries.T)
        lam, q = np.linalg.eigh(sym)
        return lam, q

    def apply(self, x):
        return self.entries @ x

    def quad(self, x) -> float:
        """``x^T B x`` (only the symmetric part contributes)."""
        return float(x @ (self.entries @ x))

    def __repr__(self):
        return f"Operator1D(d={self.d}, kind={self.kind.value})"


@dataclass(frozen=True, eq=False)
class RankOneTerm:
    """One separated term ``f_1 (x) f_2 (x) ... (x) f_N``; for N = 2 the matrix ``R S^T``."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(_frozen(np.ravel(f)) for f in self.factors)
        if len(factors) < 2:
            raise ValidationError("a rank-one term needs at least two factors")
        if any(f.size == 0 for f in factors):
            raise ValidationError("factors must be non-empty")
        object.__setattr__(self, "factors", factors)

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(f.size for f in self.factors)

    @property
    def norm(self) -> float:
        """Frobenius norm of the densified term."""
        return math.prod(float(np.linalg.norm(f)) for f in self.factors)

    def is_zero(self) -> bool:
        return any(not np.any(f) for f in self.factors)

    def scaled(self, c: float) -> "RankOneTerm":
        return RankOneTerm((c * self.factors[0],) + self.factors[1:])

    def balanced(self) -> "RankOneTerm":
        """Same tensor, every factor rescaled to the common norm ``norm ** (1/N)``."""
        norms = [np.linalg.norm(f) for f in self.factors]
        if min(norms) == 0:
            return self
        target = math.prod(norms) ** (1.0 / self.ndim)
        return RankOneTerm(tuple(f * (target / n) for f, n in zip(self.factors, norms)))

    def to_dense(self) -> np.ndarray:
        _check_dense_size(self.shape)
        out = self.factors[0]
        for f in self.factors[1:]:
            out = np.multiply.outer(out, f)
        return out


@dataclass(frozen=True, eq=False)
class Expansion:
    """Ordered rank-one terms with optional Galerkin coefficients (implicitly 1 when absent)."""

    terms: tuple = ()
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if self.coefficients is not None:
            coef = _frozen(np.ravel(self.coefficients))
            if coef.size != len(terms):
                raise ValidationError(
                    f"{coef.size} coefficients for {len(terms)} terms"
                )
            object.__setattr__(self, "coefficients", coef)
        shapes = {t.shape for t in terms}
        if len(shapes) > 1:
            raise DimensionMismatchError(f"terms have inconsistent shapes {sorted(shapes)}")

    def __len__(self):
        return len(self.terms)

    @property
    def shape(self):
        return self.terms[0].shape if self.terms else None

    @property
    def weights(self) -> np.ndarray:
        if self.coefficients is not None:
            return np.asarray(self.coefficients)
        return np.ones(len(self.terms))

    def weighted_terms(self):
        return [t.scaled(w) for t, w in zip(self.terms, self.weights)]

    def to_dense(self, shape=None) -> np.ndarray:
        shape = self.shape or shape
        if shape is None:
            raise ValidationError("empty expansion needs an explicit shape to densify")
        _check_dense_size(shape)
        if not self.terms:
            return np.zeros(shape)
        mats = [np.stack([t.factors[k] for t in self.terms], axis=1) for k in range(len(shape))]
        letters = "abcdefghij"[: len(shape)]
        spec = "z," + ",".join(f"{c}z" for c in letters) + "->" + letters
        return np.einsum(spec, self.weights, *mats)


@dataclass(frozen=True, eq=False)
class ResidualState:
    """Current residual ``F_n`` (dense) and its cached Frobenius norm."""

    array: np.ndarray
    frobenius_norm: float = field(default=None)

    def __post_init__(self):
        arr = _frozen(self.array)
        object.__setattr__(self, "array", arr)
        object.__setattr__(self, "frobenius_norm", float(np.linalg.norm(arr)))

    @property
    def shape(self):
        return self.array.shape


class Rhs:
    """Right-hand side, dense or a sum of scaled rank-one terms.

    Use :meth:`dense` or :meth:`separated` to construct.
    """

    def __init__(self, array=None, terms=None):
        if (array is None) == (terms is None):
            raise ValidationError("give exactly one of a dense array or separated terms")
        self._array = None if array is None else _frozen(array)
        self._terms = None
        if terms is not None:
            terms = [(float(c), t) for c, t in terms]
            if not terms:
                raise ValidationError("separated right-hand side needs at least one term")
            if len({t.shape for _, t in terms}) > 1:
                raise DimensionMismatchError("separated right-hand side terms have inconsistent shapes")
            self._terms = tuple(terms)

    @classmethod
    def dense(cls, array) -> "Rhs":
        return cls(array=array)

    @classmethod
    def separated(cls, terms) -> "Rhs":
        return cls(terms=terms)

    @property
    def is_separated(self) -> bool:
        return self._terms is not None

    @property
    def terms(self):
        return self._terms

    @property
    def shape(self):
        if self._array is not None:
            return self._array.shape
        return self._terms[0][1].shape

    @cached_property
    def array(self) -> np.ndarray:
        if self._array is not None:
            return self._array
        exp = Expansion([t for _, t in self._terms], [c for c, _ in self._terms])
        return _frozen(exp.to_dense())

    @cached_property
    def frobenius_norm(self) -> float:
        if self._array is not None:
            return float(np.linalg.norm(self._array))
        coef = np.array([c for c, _ in self._terms])
        gram = _gram([t for _, t in self._terms], [t for _, t in self._terms])
        return float(np.sqrt(max(coef @ gram @ coef, 0.0)))

    def frob_inner(self, term: RankOneTerm) -> float:
        """``F : T`` without densifying ``T`` when ``F`` is separated."""
        if self._array is None:
            return float(sum(c * _frob_pair(t, term) for c, t in self._terms))
        return float(contract_all(self._array, term.factors))


Dense = np.ndarray
TensorLike = Union[Expansion, RankOneTerm, np.ndarray]


def as_rhs(F) -> Rhs:
    if isinstance(F, Rhs):
        return F
    if isinstance(F, ResidualState):
        return Rhs.dense(F.array)
    if isinstance(F, Expansion):
        return Rhs.separated(list(zip(F.weights, F.terms)))
    if isinstance(F, RankOneTerm):
        return Rhs.separated([(1.0, F)])
    arr = np.asarray(F, dtype=float)
    if arr.ndim < 2:
        raise ValidationError(f"right-hand side must have at least 2 dimensions, got {arr.ndim}")
    return Rhs.dense(arr)


def _check_dense_size(shape):
    if len(shape) > MAX_DENSE_NDIM or math.prod(shape) > MAX_DENSE_SIZE:
        raise ValidationError(
            f"dense arrays are limited to {MAX_DENSE_NDIM} dimensions and {MAX_DENSE_SIZE} entries, got shape {tuple(shape)}"
        )


def broadcast_operators(ops, shape) -> list:
    """One operator per dimension; a single operator is reused for every dimension."""
    if isinstance(ops, Operator1D):
        ops = [ops] * len(shape)
    ops = list(ops)
    if len(ops) != len(shape):
        raise DimensionMismatchError(f"{len(ops)} operators for a {len(shape)}-dimensional tensor")
    for k, (op, n) in enumerate(zip(ops, shape)):
        if not isinstance(op, Operator1D):
            raise ValidationError(f"operator {k} is not an Operator1D")
        if op.d != n:
            raise DimensionMismatchError(f"operator {k} has d={op.d} but dimension {k} has size {n}")
    return ops


def mode_apply(X: np.ndarray, M: np.ndarray, k: int) -> np.ndarray:
    """Apply matrix ``M`` along mode ``k`` of ``X``."""
    return np.moveaxis(np.tensordot(M, X, axes=(1, k)), 0, k)


def contract_all(X: np.ndarray, factors, skip=None):
    """Contract ``X`` with ``factors[i]`` along every mode ``i != skip``.

    Returns a scalar if ``skip`` is None, else the vector along mode ``skip``.
    """
    out = X
    # contract trailing modes first so axis numbering stays valid
    for i in reversed(range(X.ndim)):
        if i == skip:
            continue
        out = np.tensordot(out, factors[i], axes=(i, 0))
    return out


def apply_operator(X, ops) -> np.ndarray:
    """Dense ``A(X) = sum_k B_k x_k X``."""
    X = _dense(X)
    ops = broadcast_operators(ops, X.shape)
    out = np.zeros_like(X, dtype=float)
    for k, op in enumerate(ops):
        out += mode_apply(X, op.entries, k)
    return out


def _dense(X, shape=None) -> np.ndarray:
    if isinstance(X, Expansion):
        return X.to_dense(shape)
    if isinstance(X, RankOneTerm):
        return X.to_dense()
    if isinstance(X, (Rhs, ResidualState)):
        return np.asarray(X.array)
    return np.asarray(X, dtype=float)


def _as_terms(X):
    if isinstance(X, Expansion):
        return X.weighted_terms()
    if isinstance(X, RankOneTerm):
        return [X]
    return None


def _frob_pair(x: RankOneTerm, y: RankOneTerm) -> float:
    return math.prod(float(a @ b) for a, b in zip(x.factors, y.factors))


def _gram(xs, ys) -> np.ndarray:
    """Frobenius Gram matrix ``[x_i : y_j]`` of two lists of rank-one terms."""
    out = np.ones((len(xs), len(ys)))
    for k in range(xs[0].ndim):
        X = np.stack([t.factors[k] for t in xs])
        Y = np.stack([t.factors[k] for t in ys])
        out *= X @ Y.T
    return out


def a_gram(xs, ys, ops) -> np.ndarray:
    """Matrix ``[<x_i, y_j>_A]`` for two lists of rank-one terms, in O(sum d_k^2) per pair."""
    xs, ys = list(xs), list(ys)
    if not xs or not ys:
        return np.zeros((len(xs), len(ys)))
    ops = broadcast_operators(ops, xs[0].shape)
    if any(y.shape != xs[0].shape for y in ys):
        raise DimensionMismatchError("terms have inconsistent shapes")
    N = len(ops)
    plain = []
    applied = []
    for k, op in enumerate(ops):
        X = np.stack([t.factors[k] for t in xs])
        Y = np.stack([t.factors[k] for t in ys])
        plain.append(X @ Y.T)
        applied.append(X @ (op.entries @ Y.T))
    out = np.zeros((len(xs), len(ys)))
    for k in range(N):
        prod = applied[k].copy()
        for j in range(N):
            if j != k:
                prod *= plain[j]
        out += prod
    return out


def a_inner(X: TensorLike, Y: TensorLike, ops) -> float:
    """``<X, Y>_A = X : A(Y)``.

    Rank-one and expansion arguments are handled in separated form; anything
    else is densified. For symmetric operators the form is symmetric.
    """
    xt, yt = _as_terms(X), _as_terms(Y)
    if xt is not None and yt is not None:
        if not xt or not yt:
            return 0.0
        return float(a_gram(xt, yt, ops).sum())
    shape = None
    for Z in (X, Y):
        if not isinstance(Z, (Expansion,)) or len(Z):
            shape = _dense(Z).shape
            break
    Xd, Yd = _dense(X, shape), _dense(Y, shape)
    if Xd.shape != Yd.shape:
        raise DimensionMismatchError(f"shapes {Xd.shape} and {Yd.shape} differ")
    return float(np.vdot(Xd, apply_operator(Yd, ops)))


def a_norm(X: TensorLike, ops) -> float:
    return math.sqrt(max(a_inner(X, X, ops), 0.0))


def frob_inner(F, U) -> float:
    """``F : U`` exploiting separation on either side."""
    F = as_rhs(F) if not isinstance(F, np.ndarray) else Rhs.dense(F)
    ut = _as_terms(U)
    if ut is None:
        U = _dense(U)
        if U.shape != F.shape:
            raise DimensionMismatchError(f"shapes {F.shape} and {U.shape} differ")
        return float(np.vdot(F.array, U))
    if ut and ut[0].shape != F.shape:
        raise DimensionMismatchError(f"shapes {F.shape} and {ut[0].shape} differ")
    return float(sum(F.frob_inner(t) for t in ut))


def energy(U: TensorLike, F, ops) -> float:
    """``E(U) = 1/2 <U, U>_A - F : U``; ``U`` is never densified when both sides are separated."""
    F = as_rhs(F)
    if isinstance(U, Expansion) and len(U) == 0:
        return 0.0
    if _as_terms(U) is None:
        U = _dense(U)
        if U.shape != F.shape:
            raise DimensionMismatchError(f"shapes {F.shape} and {U.shape} differ")
        return 0.5 * float(np.vdot(U, apply_operator(U, ops))) - float(np.vdot(F.array, U))
    return 0.5 * a_inner(U, U, ops) - frob_inner(F, U)


def residual_recompute(F, U: Expansion, ops) -> ResidualState:
    """``F - A(U)`` evaluated from the full expansion against the original ``F``."""
    F = as_rhs(F)
    if isinstance(U, Expansion) and len(U) == 0:
        return ResidualState(F.array)
    Ud = _dense(U, F.shape)
    if Ud.shape != F.shape:
        raise DimensionMismatchError(f"shapes {F.shape} and {Ud.shape} differ")
    return ResidualState(F.array - apply_operator(Ud, ops))


# ---------------------------------------------------------------------------
# operator construction and the matrix file format


def fd_laplacian(d: int) -> np.ndarray:
    """``(1/h^2) tridiag(-1, 2, -1)`` on (0, 1) with homogeneous Dirichlet ends, ``h = 1/(d+1)``."""
    h = 1.0 / (d + 1)
    main = np.full(d, 2.0)
    off = np.full(d - 1, -1.0)
    return (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h**2


def build_operator(kind: str, d: int, *, lo: float = 1.0, hi: float = 2.0, path=None,
                   kind_of_matrix: OperatorKind | str = OperatorKind.SPD) -> Operator1D:
    """Build a one-dimensional operator.

    Parameters
    ----------
    kind : {"fd_laplacian", "diag_linspace", "diag_range", "identity", "file"}
        ``diag_range`` is ``diag(1, 2, ..., d)``.
    d : int
        Size. Ignored for ``file`` except as a consistency check when positive.
    lo, hi : float
        Endpoints for ``diag_linspace`` (inclusive).
    path : path-like
        Matrix file for ``file``.
    kind_of_matrix : OperatorKind
        Only meaningful for ``file``; SPD matrices are validated.
    """
    kind = kind.replace("-", "_")
    if kind == "file":
        M = read_matrix(path)
        if d and M.shape[0] != d:
            raise DimensionMismatchError(f"{path}: matrix has size {M.shape[0]}, expected {d}")
        return Operator1D(M, kind_of_matrix)
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValidationError(f"d must be a positive integer, got {d!r}")
    if kind == "fd_laplacian":
        if d < 2:
            raise ValidationError("fd_laplacian needs d >= 2")
        return Operator1D(fd_laplacian(d))
    if kind == "diag_linspace":
        if lo <= 0:
            raise ValidationError(f"diag_linspace needs lo > 0, got {lo}")
        if hi <= 0:
            raise ValidationError(f"diag_linspace needs hi > 0, got {hi}")
        return Operator1D(np.diag(np.linspace(lo, hi, d)))
    if kind == "diag_range":
        return Operator1D(np.diag(np.arange(1.0, d + 1.0)))
    if kind == "identity":
        return Operator1D(np.eye(d))
    raise ValidationError(f"unknown operator kind {kind!r}")


def parse_operator_spec(spec: str, d: int) -> Operator1D:
    """Parse the CLI form ``laplacian | diag-linspace:LO:HI | diag-range | identity | file:PATH``."""
    name, _, rest = spec.partition(":")
    name = name.strip().lower()
    if name in ("laplacian", "fd-laplacian", "fd_laplacian"):
        return build_operator("fd_laplacian", d)
    if name in ("diag-linspace", "diag_linspace"):
        lo, hi = 1.0, 2.0
        if rest:
            parts = rest.split(":")
            if len(parts) != 2:
                raise ValidationError(f"expected diag-linspace:LO:HI, got {spec!r}")
            try:
                lo, hi = float(parts[0]), float(parts[1])
            except ValueError as exc:
                raise ValidationError(f"bad diag-linspace bounds in {spec!r}") from exc
        return build_operator("diag_linspace", d, lo=lo, hi=hi)
    if name in ("diag-range", "diag_range"):
        return build_operator("diag_range", d)
    if name == "identity":
        return build_operator("identity", d)
    if name == "file":
        if not rest:
            raise ValidationError("file operator needs a path: file:PATH")
        return build_operator("file", d, path=rest)
    raise ValidationError(f"unknown operator {spec!r}")


def read_matrix(path) -> np.ndarray:
    """Read the plain-text matrix format.

    First non-comment line is ``d1 d2``; the next ``d1`` non-comment lines
    hold ``d2`` reals each. Lines starting with ``#`` are ignored.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MatrixFileError(f"cannot read file ({exc.strerror})", path) from exc
    rows = []
    shape = None
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if shape is None:
            if len(tokens) != 2:
                raise MatrixFileError("header must be 'd1 d2'", path, lineno)
            try:
                shape = (int(tokens[0]), int(tokens[1]))
            except ValueError:
                raise MatrixFileError(f"header must hold two integers, got {line!r}", path, lineno) from None
            if shape[0] < 1 or shape[1] < 1:
                raise MatrixFileError("dimensions must be positive", path, lineno)
            continue
        if len(rows) == shape[0]:
            raise MatrixFileError(f"more than {shape[0]} data rows", path, lineno)
        if len(tokens) != shape[1]:
            raise MatrixFileError(f"expected {shape[1]} values, got {len(tokens)}", path, lineno)
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            raise MatrixFileError(f"non-numeric value in {line!r}", path, lineno) from None
    if shape is None:
        raise MatrixFileError("missing 'd1 d2' header", path, lineno or None)
    if len(rows) != shape[0]:
        raise MatrixFileError(f"expected {shape[0]} data rows, got {len(rows)}", path, lineno)
    M = np.array(rows, dtype=float)
    if not np.all(np.isfinite(M)):
        raise MatrixFileError("non-finite value", path)
    return M


def write_matrix(path, M, comment: str | None = None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValidationError("only 2-D arrays can be written in the matrix format")
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{M.shape[0]} {M.shape[1]}")
    lines.extend(" ".join(repr(float(x)) for x in row) for row in M)
    Path(path).write_text("\n".join(lines) + "\n")


def random_antisymmetric(d: int, rng) -> np.ndarray:
    """``(M - M^T)/2`` for ``M`` with i.i.d. standard normal entries."""
    M = rng.standard_normal((d, d))
    return 0.5 * (M - M.T)


def advection_diffusion_operator(D: Operator1D, scale: float, rng) -> Operator1D:
    """``B = D + scale * A`` with ``A`` random antisymmetric.

    The antisymmetric draw is consumed even when ``scale == 0`` so the rest of
    the random stream is the same for every scale.
    """
    A = random_antisymmetric(D.d, rng)
    if scale == 0:
        return Operator1D(D.entries, OperatorKind.NONSYMMETRIC)
    return Operator1D(D.entries + scale * A, OperatorKind.NONSYMMETRIC)
