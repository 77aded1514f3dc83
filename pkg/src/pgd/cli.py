"""Command-line entry point: ``pgd solve|svd|experiment|verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .exceptions import PGDError, StalledError, ValidationError
from .oracle import dense_svd
from .svd import svd_greedy_decompose

# flag dest -> config key
_FLAG_KEYS = (
    "d", "d_list", "operator", "rhs", "eps", "max_terms", "algorithm", "fp_tol", "fp_max_sweeps", "restarts",
    "antisym_scale", "seeds", "out", "lambda1", "lambda2",
)


def _int_list(text):
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file with config values (flags override it)")
    p.add_argument("--d", type=int)
    p.add_argument("--operator", help="laplacian | diag-linspace:LO:HI | diag-range | identity | file:PATH")
    p.add_argument("--rhs", help="random-uniform | random-normal | rank-one | file:PATH")
    p.add_argument("--eps", type=float)
    p.add_argument("--max-terms", dest="max_terms", type=int)
    p.add_argument("--algorithm", choices=("pure", "orthogonal"))
    p.add_argument("--fp-tol", dest="fp_tol", type=float)
    p.add_argument("--fp-max-sweeps", dest="fp_max_sweeps", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--antisym-scale", dest="antisym_scale", type=float)
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", dest="seeds", type=lambda s: (int(s),))
    seeds.add_argument("--seeds", dest="seeds", type=_int_list, help="comma or space separated")
    p.add_argument("--out", help="output directory (default: results)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgd", description="Greedy rank-one solvers for Sylvester-type problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem and write its trace")
    _add_common(p)
    p.add_argument("--nonsym", action="store_true", help="add a random antisymmetric part scaled by --antisym-scale")

    p = sub.add_parser("svd", help="greedy rank-one decomposition of a matrix")
    _add_common(p)

    p = sub.add_parser("experiment", help="run a named experiment")
    p.add_argument("name", choices=ex.EXPERIMENTS)
    _add_common(p)
    p.add_argument("--d-list", dest="d_list", type=_int_list)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)

    p = sub.add_parser("verify", help="run the counterexample and oracle checks")
    _add_common(p)
    return parser


def load_config(args, experiment: str) -> ex.ExperimentConfig:
    values = {}
    if getattr(args, "config", None) is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object")
        values.update({k.replace("-", "_"): v for k, v in data.items()})
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    values["experiment"] = experiment
    return ex.ExperimentConfig.from_mapping(values)


def _cmd_solve(args) -> ex.ExperimentResult:
    cfg = load_config(args, "energy_trace")
    op, F, report = ex.run_problem(cfg, cfg.dim, cfg.seeds[0], nonsymmetric=args.nonsym)
    path = ex.write_csv(Path(cfg.out) / "solve_trace.csv", ex.TRACE_HEADER, ex.trace_rows(report), cfg.config_hash())
    msg = ex._termination_message(report, "solve") or (
        f"converged in {report.n_terms} terms, residual {report.final_residual_frobenius:.3e}")
    return ex.ExperimentResult(ex._exit_for(report.termination), [path], [msg])


def _cmd_svd(args) -> ex.ExperimentResult:
    cfg = load_config(args, "svd_demo")
    rng_rhs, _, rng_solver = ex._streams(cfg.seeds[0])
    d = cfg.dim
    G = ex.make_rhs(cfg.rhs, (ex.build_operator("identity", d),) * 2, rng_rhs)
    eps = cfg.eps * float(np.linalg.norm(G)) if args.eps is None else cfg.eps
    try:
        triplets = svd_greedy_decompose(G, eps, min(cfg.max_terms, min(G.shape)), ex._rank_one_svd_config(cfg),
                                        rng_solver)
        code = ex.EXIT_OK
        msgs = [f"{len(triplets)} terms"]
    except StalledError as exc:
        triplets, code, msgs = exc.partial or [], ex.EXIT_STALLED, [f"stalled: {exc}"]
    oracle = dense_svd(G)
    rows = [(k + 1, t.sigma, oracle[k].sigma if k < len(oracle) else None) for k, t in enumerate(triplets)]
    path = ex.write_csv(Path(cfg.out) / "svd.csv", ("k", "sigma", "sigma_oracle"), rows, cfg.config_hash())
    return ex.ExperimentResult(code, [path], msgs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "solve":
            result = _cmd_solve(args)
        elif args.command == "svd":
            result = _cmd_svd(args)
        elif args.command == "experiment":
            result = ex.run_experiment(load_config(args, args.name))
        else:
            result = ex.run_experiment(load_config(args, "counterexample"))
    except PGDError as exc:
        result = ex.ExperimentResult(ex.EXIT_INVALID, [], [f"{type(exc).__name__}: {exc}"])
    stream = sys.stdout if result.exit_code == ex.EXIT_OK else sys.stderr
    for msg in result.messages:
        print(msg, file=stream)
    for path in result.files:
        print(f"wrote {path}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
