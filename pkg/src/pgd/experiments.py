"""Reproducible experiments writing CSV files.

Every experiment takes an :class:`ExperimentConfig`, writes CSV files whose
first line is ``# config_hash=<sha256>``, and returns an
:class:`ExperimentResult` carrying the process exit code.

Random streams are split per seed with ``SeedSequence(seed).spawn(3)``:
one child for the right-hand side, one for the operator (antisymmetric
part), one for the solver. Runs that share a seed therefore see the same
``F`` whatever the operator.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import PGDError, StalledError, ValidationError
from .fixed_point import FixedPointConfig
from .greedy import GreedyConfig, SolveReport, Termination, galerkin_coefficients, solve
from .oracle import (
    KRONECKER_MAX_D,
    dense_svd,
    eigen_rank_one_el_check,
    fit_decay_exponent,
    jacobi_eigh,
    sylvester_dense,
    verify_counterexample,
)
from .svd import check_svd_orthogonality, svd_greedy_decompose
from .tensor import (
    Expansion,
    Operator1D,
    advection_diffusion_operator,
    apply_operator,
    build_operator,
    parse_operator_spec,
    read_matrix,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STALLED = 2
EXIT_INVALID = 3
EXIT_MISMATCH = 4
EXIT_MAX_TERMS = 5

EXPERIMENTS = ("energy_trace", "iteration_scaling", "svd_demo", "counterexample", "nonsym", "rate_fit")
RHS_KINDS = ("random-uniform", "random-normal", "rank-one")

NONSYM_ORACLE_RTOL = 1e-4
SVD_SIGMA_RTOL = 1e-6
COUNTEREXAMPLE_TOL = 1e-10
RATE_MAX_SLOPE = -0.5

_DEFAULT_D = {"energy_trace": 10, "svd_demo": 12, "counterexample": 8, "nonsym": 10, "rate_fit": 20}
_DEFAULT_OPERATOR = {"nonsym": "laplacian", "rate_fit": "laplacian"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment run.

    ``d`` and ``operator`` default per experiment when left as ``None``.
    """

    experiment: str = "energy_trace"
    d: int | None = None
    d_list: tuple = (10, 20, 30)
    operator: str | None = None
    rhs: str = "random-uniform"
    eps: float = 1e-6
    max_terms: int = 500
    algorithm: str = "pure"
    fp_tol: float = 1e-8
    fp_max_sweeps: int = 500
    restarts: int = 3
    antisym_scale: float = 0.5
    seeds: tuple = (1,)
    lambda1: float = math.pi**2
    lambda2: float = 4 * math.pi**2
    out: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "d_list", tuple(int(x) for x in self.d_list))
        object.__setattr__(self, "seeds", tuple(int(x) for x in self.seeds))
        if not self.rhs.startswith("file:"):
            object.__setattr__(self, "rhs", self.rhs.replace("_", "-"))
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not self.seeds:
            raise ValidationError("seeds must be non-empty")
        if not self.eps > 0:
            raise ValidationError(f"eps must be positive, got {self.eps!r}")
        if self.d is not None and int(self.d) < 1:
            raise ValidationError(f"d must be positive, got {self.d!r}")
        if not self.d_list or min(self.d_list) < 1:
            raise ValidationError("d_list must hold positive integers")
        if not math.isfinite(self.antisym_scale):
            raise ValidationError("antisym_scale must be finite")
        if self.rhs not in RHS_KINDS and not self.rhs.startswith("file:"):
            raise ValidationError(f"rhs must be one of {', '.join(RHS_KINDS)} or file:PATH, got {self.rhs!r}")
        # surfaces bad algorithm / max_terms / restarts / tolerances early
        self.greedy_config()

    @property
    def dim(self) -> int:
        return int(self.d) if self.d is not None else _DEFAULT_D.get(self.experiment, 10)

    @property
    def operator_spec(self) -> str:
        return self.operator or _DEFAULT_OPERATOR.get(self.experiment, "diag-linspace:1:2")

    def greedy_config(self, algorithm=None) -> GreedyConfig:
        return GreedyConfig(
            algorithm=algorithm or self.algorithm,
            eps=self.eps,
            max_terms=self.max_terms,
            fixed_point=FixedPointConfig(max_sweeps=self.fp_max_sweeps, rel_tol=self.fp_tol),
            restarts_per_term=self.restarts,
        )

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every field except ``out``."""
        data = dataclasses.asdict(self)
        data.pop("out")
        data["d"] = self.dim
        data["operator"] = self.operator_spec
        text = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def from_mapping(cls, mapping) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        clean = {}
        for key, value in mapping.items():
            key = key.replace("-", "_")
            if key not in names:
                raise ValidationError(f"unknown config key {key!r}")
            if key in ("d_list", "seeds") and isinstance(value, (int, float)):
                value = (value,)
            clean[key] = value
        return cls(**clean)


@dataclass
class ExperimentResult:
    exit_code: int
    files: list = field(default_factory=list)
    messages: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path, header, rows, config_hash: str) -> Path:
    """Write ``rows`` under a ``# config_hash=`` comment line, ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())
    return path


def _streams(seed):
    rhs, op, solver = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(rhs), np.random.default_rng(op), np.random.default_rng(solver)


def make_rhs(kind: str, ops, rng) -> np.ndarray:
    """Right-hand side of the requested kind for ``d x d`` operators ``ops = (op_x, op_y)``."""
    shape = tuple(op.d for op in ops)
    if kind == "random-uniform":
        return rng.uniform(0.0, 1.0, shape)
    if kind == "random-normal":
        return rng.standard_normal(shape)
    if kind == "rank-one":
        r, s = rng.uniform(0.5, 1.5, shape[0]), rng.uniform(0.5, 1.5, shape[1])
        return apply_operator(np.outer(r, s), ops)
    if kind.startswith("file:"):
        F = read_matrix(kind[5:])
        if F.shape != shape:
            raise ValidationError(f"right-hand side file has shape {F.shape}, expected {shape}")
        return F
    raise ValidationError(f"unknown rhs kind {kind!r}")


def _operator(cfg: ExperimentConfig, d: int) -> Operator1D:
    return parse_operator_spec(cfg.operator_spec, d)


def _exit_for(termination: Termination) -> int:
    return {
        Termination.CONVERGED: EXIT_OK,
        Termination.STALLED: EXIT_STALLED,
        Termination.MAX_TERMS: EXIT_MAX_TERMS,
    }[termination]


def _combine(codes) -> int:
    """Worst code wins: mismatch, then stalled, then max terms."""
    for code in (EXIT_INVALID, EXIT_MISMATCH, EXIT_STALLED, EXIT_MAX_TERMS):
        if code in codes:
            return code
    return EXIT_OK


def _termination_message(report: SolveReport, label: str) -> str | None:
    if report.termination is Termination.CONVERGED:
        return None
    return (f"{label}: {report.termination.value} after {report.n_terms} terms, "
            f"residual {report.final_residual_frobenius:.3e}")


TRACE_HEADER = ("iter", "energy", "term_a_norm", "residual_fro", "fp_sweeps")


def trace_rows(report: SolveReport):
    return [(t.iteration, t.energy, t.term_a_norm, t.residual_frobenius, t.fixed_point_sweeps) for t in report.trace]


def run_problem(cfg: ExperimentConfig, d: int, seed: int, *, algorithm=None, nonsymmetric=False):
    """Build ``(operator, F)`` for one seed and solve. Returns ``(op, F, report)``."""
    rng_rhs, rng_op, rng_solver = _streams(seed)
    op = _operator(cfg, d)
    if nonsymmetric:
        op = advection_diffusion_operator(op, cfg.antisym_scale, rng_op)
    F = make_rhs(cfg.rhs, (op, op), rng_rhs)
    report = solve(op, F, cfg.greedy_config(algorithm), rng_solver)
    return op, F, report


# ---------------------------------------------------------------------------
# experiments


def run_energy_trace(cfg: ExperimentConfig) -> ExperimentResult:
    """Per-iteration energy trace of one solve (first seed)."""
    seed = cfg.seeds[0]
    _, _, report = run_problem(cfg, cfg.dim, seed)
    path = write_csv(Path(cfg.out) / "energy_trace.csv", TRACE_HEADER, trace_rows(report), cfg.config_hash())
    result = ExperimentResult(_exit_for(report.termination), [path])
    msg = _termination_message(report, f"seed {seed}")
    result.messages.append(msg or f"converged in {report.n_terms} iterations")
    return result


def run_iteration_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    """Iterations to reach ``eps`` for each ``d`` in ``d_list`` and each seed, plus medians."""
    rows, codes, messages = [], [], []
    for d in sorted(cfg.d_list):
        counts, terms = [], []
        for seed in sorted(cfg.seeds):
            _, _, report = run_problem(cfg, d, seed)
            rows.append((d, seed, report.n_terms, report.termination.value))
            counts.append(report.n_terms)
            terms.append(report.termination)
            codes.append(_exit_for(report.termination))
            msg = _termination_message(report, f"d={d} seed={seed}")
            if msg:
                messages.append(msg)
        status = "converged" if all(t is Termination.CONVERGED for t in terms) else "mixed"
        median = statistics.median(counts)
        rows.append((d, "median", float(median), status))
        messages.append(f"d={d}: median {median:g} iterations")
    path = write_csv(Path(cfg.out) / "iteration_scaling.csv", ("d", "seed", "iterations", "terminated"), rows,
                     cfg.config_hash())
    return ExperimentResult(_combine(codes), [path], messages)


def _rank_one_svd_config(cfg: ExperimentConfig) -> FixedPointConfig:
    return FixedPointConfig(max_sweeps=max(cfg.fp_max_sweeps, 5000), rel_tol=min(cfg.fp_tol, 1e-12))


def run_svd_demo(cfg: ExperimentConfig) -> ExperimentResult:
    """Greedy decomposition of a random matrix against the dense SVD oracle."""
    rows, codes, messages = [], [], []
    d = cfg.dim
    for seed in sorted(cfg.seeds):
        rng_rhs, _, rng_solver = _streams(seed)
        G = make_rhs(cfg.rhs, (build_operator("identity", d),) * 2, rng_rhs)
        eps = max(cfg.eps, 1e-10) * float(np.linalg.norm(G))
        triplets = svd_greedy_decompose(G, eps, min(cfg.max_terms, min(G.shape)), _rank_one_svd_config(cfg),
                                        rng_solver)
        oracle = dense_svd(G)
        worst = 0.0
        for k, t in enumerate(triplets):
            ref = oracle[k] if k < len(oracle) else None
            rel = abs(t.sigma - ref.sigma) / ref.sigma if ref else float("inf")
            worst = max(worst, rel)
            rows.append((seed, k + 1, t.sigma, ref.sigma if ref else None, rel,
                         abs(float(t.u @ ref.u)) if ref else None, abs(float(t.v @ ref.v)) if ref else None))
        if len(triplets) >= 2:
            report = check_svd_orthogonality(triplets)
            messages.append(f"seed {seed}: {len(triplets)} terms, max sigma error {worst:.2e}, "
                            f"orthogonality {report.max_abs_inner:.2e}")
        if worst > SVD_SIGMA_RTOL:
            codes.append(EXIT_MISMATCH)
            messages.append(f"seed {seed}: sigma mismatch {worst:.3e} > {SVD_SIGMA_RTOL:g}")
    path = write_csv(Path(cfg.out) / "svd_demo.csv",
                     ("seed", "k", "sigma", "sigma_oracle", "rel_error", "u_alignment", "v_alignment"), rows,
                     cfg.config_hash())
    return ExperimentResult(_combine(codes), [path], messages)


def run_counterexample(cfg: ExperimentConfig) -> ExperimentResult:
    """Euler-Lagrange residuals of the non-eigen stationary point and of the eigen terms."""
    rows, codes, messages = [], [], []
    lam1, lam2, d = cfg.lambda1, cfg.lambda2, cfg.dim
    for seed in sorted(cfg.seeds):
        non_eigen = verify_counterexample(lam1, lam2, d, seed)
        perturbed = verify_counterexample(lam1, lam2, d, seed, alpha1_shift=0.1)
        rng = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        lam = np.concatenate([[lam1, lam2], lam1 + lam2 + np.arange(1.0, d - 1.0)])
        M = (Q * lam) @ Q.T
        eigen = eigen_rank_one_el_check(Operator1D(0.5 * (M + M.T)), [1.0, 0.5, 0.25][:d])
        checks = [
            ("non_eigen_stationary", non_eigen, COUNTEREXAMPLE_TOL, non_eigen <= COUNTEREXAMPLE_TOL),
            ("perturbed_alpha1", perturbed, 1e-3, perturbed > 1e-3),
            ("eigen_terms", eigen, COUNTEREXAMPLE_TOL, eigen <= COUNTEREXAMPLE_TOL),
        ]
        for name, value, tol, ok in checks:
            rows.append((seed, name, value, tol, ok))
            if not ok:
                codes.append(EXIT_MISMATCH)
                messages.append(f"seed {seed}: {name} residual {value:.3e} fails (tolerance {tol:g})")
    messages.append("counterexample checks " + ("failed" if codes else "passed"))
    path = write_csv(Path(cfg.out) / "counterexample.csv", ("seed", "check", "value", "tolerance", "passed"), rows,
                     cfg.config_hash())
    return ExperimentResult(_combine(codes), [path], messages)


def run_nonsym(cfg: ExperimentConfig) -> ExperimentResult:
    """Pure and orthogonal greedy for ``B = D + s A`` compared with the Kronecker oracle."""
    trace, summary, codes, messages = [], [], [], []
    d = cfg.dim
    for seed in sorted(cfg.seeds):
        for algorithm in ("pure", "orthogonal"):
            op, F, report = run_problem(cfg, d, seed, algorithm=algorithm, nonsymmetric=True)
            for t in report.trace:
                trace.append((seed, algorithm, t.iteration, t.residual_frobenius, t.term_a_norm,
                              t.fixed_point_sweeps))
            rel = None
            if d <= KRONECKER_MAX_D:
                G = sylvester_dense(op, F, method="kronecker")
                U = report.expansion.to_dense(F.shape)
                rel = float(np.linalg.norm(U - G) / np.linalg.norm(G))
            else:
                logger.warning("d=%d exceeds the Kronecker oracle cap %d; comparison skipped", d, KRONECKER_MAX_D)
                messages.append(f"d={d} above oracle cap {KRONECKER_MAX_D}: comparison skipped")
            summary.append((seed, algorithm, report.n_terms, report.termination.value,
                            report.final_residual_frobenius, rel))
            codes.append(_exit_for(report.termination))
            msg = _termination_message(report, f"seed {seed} {algorithm}")
            if msg:
                messages.append(msg)
            elif rel is not None and rel > NONSYM_ORACLE_RTOL:
                codes.append(EXIT_MISMATCH)
                messages.append(f"seed {seed} {algorithm}: relative error {rel:.3e} > {NONSYM_ORACLE_RTOL:g}")
            else:
                messages.append(f"seed {seed} {algorithm}: {report.n_terms} terms, relative error vs oracle "
                                f"{_fmt(rel)}")
    h = cfg.config_hash()
    out = Path(cfg.out)
    files = [
        write_csv(out / "nonsym_trace.csv",
                  ("seed", "algorithm", "iter", "residual_fro", "term_a_norm", "fp_sweeps"), trace, h),
        write_csv(out / "nonsym_summary.csv",
                  ("seed", "algorithm", "iterations", "terminated", "residual_fro", "rel_error_oracle"), summary, h),
    ]
    return ExperimentResult(_combine(codes), files, messages)


def synthetic_solution(op: Operator1D, rng) -> np.ndarray:
    """``g = Q C Q^T`` with ``C[i, j] = z_ij 2^-(i+j)`` in the eigenbasis ``Q`` of ``op``."""
    Q = jacobi_eigh(op.entries).vectors
    i = np.arange(op.d)
    C = rng.standard_normal((op.d, op.d)) * 2.0 ** (-(i[:, None] + i[None, :]))
    return Q @ C @ Q.T


def energy_error_series(expansion: Expansion, g, F, op, galerkin: bool) -> list:
    """``|g - U_n|_A`` for every prefix of ``expansion`` (Galerkin re-fit per prefix when asked)."""
    out = []
    terms = expansion.terms
    for n in range(1, len(terms) + 1):
        coef = galerkin_coefficients(terms[:n], F, op) if galerkin else None
        err = g - Expansion(terms[:n], coef).to_dense()
        out.append(math.sqrt(max(float(np.vdot(err, apply_operator(err, op))), 0.0)))
    return out


def run_rate_fit(cfg: ExperimentConfig, skip: int = 4, max_n: int = 50) -> ExperimentResult:
    """Decay exponent of the orthogonal greedy energy error on a smooth synthetic solution."""
    rows, summary, codes, messages = [], [], [], []
    for seed in sorted(cfg.seeds):
        rng_rhs, _, rng_solver = _streams(seed)
        op = _operator(cfg, cfg.dim)
        g = synthetic_solution(op, rng_rhs)
        F = apply_operator(g, op)
        gcfg = dataclasses.replace(cfg.greedy_config("orthogonal"), eps=1e-13 * float(np.linalg.norm(F)),
                                   max_terms=max_n)
        report = solve(op, F, gcfg, rng_solver)
        series = energy_error_series(report.expansion, g, F, op, galerkin=True)
        rows.extend((seed, n, v) for n, v in enumerate(series, start=1))
        positive = [v for v in series if v > 0]
        if len(positive) < skip + 5:
            slope = None
            codes.append(EXIT_MISMATCH)
            messages.append(f"seed {seed}: only {len(positive)} usable terms, cannot fit a rate")
        else:
            slope = fit_decay_exponent(positive, skip)
            ok = slope <= RATE_MAX_SLOPE
            messages.append(f"seed {seed}: fitted exponent {slope:.3f} over n in [{skip + 1}, {len(positive)}]")
            if not ok:
                codes.append(EXIT_MISMATCH)
        summary.append((seed, len(series), slope))
    h = cfg.config_hash()
    out = Path(cfg.out)
    files = [
        write_csv(out / "rate_fit.csv", ("seed", "iter", "error_a_norm"), rows, h),
        write_csv(out / "rate_fit_summary.csv", ("seed", "terms", "slope"), summary, h),
    ]
    return ExperimentResult(_combine(codes), files, messages)


RUNNERS = {
    "energy_trace": run_energy_trace,
    "iteration_scaling": run_iteration_scaling,
    "svd_demo": run_svd_demo,
    "counterexample": run_counterexample,
    "nonsym": run_nonsym,
    "rate_fit": run_rate_fit,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Dispatch on ``cfg.experiment``; library errors map to exit code 3."""
    try:
        return RUNNERS[cfg.experiment](cfg)
    except StalledError as exc:
        return ExperimentResult(EXIT_STALLED, [], [f"stalled: {exc}"])
    except PGDError as exc:
        return ExperimentResult(EXIT_INVALID, [], [f"{type(exc).__name__}: {exc}"])
