"""Command-line interface: solve, generate, maxcut, check.

Exit codes: 0 success/Converged, 1 usage or parse error, 2 iteration or
time limit reached, 3 subproblem failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import problems, solver
from .linalg import EigenConvergenceError


def _lmax_arg(text: str):
    if text in solver.LMAX_PRESETS:
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--lmax must be an integer or one of {solver.LMAX_PRESETS}"
        )


def _add_solver_flags(p: argparse.ArgumentParser):
    d = solver.SolverParams()
    p.add_argument("--t0", type=float, default=d.t0)
    p.add_argument("--tmin", type=float, default=d.t_min)
    p.add_argument("--tmax", type=float, default=d.t_max)
    p.add_argument("--beta1", type=float, default=d.beta1)
    p.add_argument("--beta2", type=float, default=d.beta2)
    p.add_argument("--beta3", type=float, default=d.beta3)
    p.add_argument("--xi", type=float, default=d.xi)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--lmax", type=_lmax_arg, default=d.l_max)
    p.add_argument("--eps", type=float, default=d.eps)
    p.add_argument("--maxiter", type=int, default=d.maxiter)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--nullmax", type=int, default=d.nullmax)
    p.add_argument("--prior-rank", type=int, default=None)
    p.add_argument("--predict-rank", action="store_true")
    p.add_argument("--trace", choices=("jsonl", "csv", "none"), default="none")
    p.add_argument("--trace-out", default=None,
                   help="trace file path (default: stderr is not used; "
                        "required when --trace is not 'none')")
    p.add_argument("--out", default=None, help="write the run report here "
                                               "instead of stdout")


def _params_from_args(args) -> solver.SolverParams:
    return solver.SolverParams(
        t0=args.t0, t_min=args.tmin, t_max=args.tmax, beta1=args.beta1,
        beta2=args.beta2, beta3=args.beta3, xi=args.xi, rho=args.rho,
        rank=args.rank, l_max=args.lmax, eps=args.eps, maxiter=args.maxiter,
        time_limit_secs=args.time_limit, nullmax=args.nullmax,
        predict_rank=args.predict_rank, prior_rank=args.prior_rank,
    )


TRACE_FIELDS = ("k", "step_type", "F_y", "delta1", "delta4", "delta5",
                "delta6", "t", "l", "elapsed_secs")


def _write_trace(records, fmt: str, path: str):
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps({f: getattr(rec, f) for f in TRACE_FIELDS}))
                fh.write("\n")
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_FIELDS)
            for rec in records:
                w.writerow([getattr(rec, f) for f in TRACE_FIELDS])


def _report(result: solver.SolveResult, problem, params) -> dict:
    return {
        "status": result.status,
        "iterations": result.iterations,
        "wall_secs": result.wall_secs,
        "delta1": result.delta1,
        "delta4": result.delta4,
        "delta5": result.delta5,
        "delta6": result.delta6,
        "objective_primal": result.objective_primal,
        "objective_dual": result.objective_dual,
        "rank_used": result.rank_used,
        "rho": result.rho,
        "instance": {"name": problem.name, "n": problem.n, "m": problem.m,
                     "known_rank": problem.known_rank,
                     "known_trace": problem.known_trace},
        "params": {k: v for k, v in vars(params).items()},
    }


def _emit(doc: dict, out_path: str | None):
    text = json.dumps(doc, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_instance(path: str):
    if path.endswith(".json"):
        problem, _ = problems.load_manifest(path)
        return problem
    return problems.load_sdpa(path)


def _run_solver(problem, params, args) -> int:
    if args.trace != "none" and not args.trace_out:
        print("error: --trace requires --trace-out", file=sys.stderr)
        return 1
    try:
        result = solver.solve(problem, params)
    except (ValueError, EigenConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.trace != "none":
        _write_trace(result.trace, args.trace, args.trace_out)
    _emit(_report(result, problem, params), args.out)
    if result.status == solver.STATUS_CONVERGED:
        return 0
    if result.status == solver.STATUS_SUBPROBLEM_FAILURE:
        return 3
    return 2


def cmd_solve(args) -> int:
    try:
        problem = _load_instance(args.input)
    except (OSError, problems.ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        params = _params_from_args(args)
        params.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return _run_solver(problem, params, args)


def cmd_generate(args) -> int:
    try:
        problem, planted = problems.generate_random_sdp(
            args.n, args.m, args.r, args.sparsity, args.s, args.seed
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, problem.name)
    instance_path = stem + ".dat-s"
    manifest_path = stem + ".json"
    problems.write_sdpa(problem, instance_path)
    problems.write_manifest(manifest_path, problem, planted, instance_path,
                            args.r, args.sparsity, args.s, args.seed)
    print(instance_path)
    print(manifest_path)
    return 0


def cmd_maxcut(args) -> int:
    try:
        graph = problems.load_gset(args.input)
        problem = problems.build_maxcut_sdp(graph, sense=args.sense)
    except (OSError, problems.ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        params = _params_from_args(args)
        if params.rank is None and not params.predict_rank:
            params.rank = max(1, int(round(np.sqrt(2.0 * problem.n))))
        params.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return _run_solver(problem, params, args)


def cmd_check(args) -> int:
    try:
        problem = _load_instance(args.input)
        with open(args.solution, encoding="utf-8") as fh:
            sol = json.load(fh)
    except (OSError, problems.ParseError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    y = np.asarray(sol.get("y", sol.get("y_star")), dtype=np.float64)
    if y.ndim != 1 or y.size != problem.m:
        print(f"error: solution y has size {y.size}, expected {problem.m}",
              file=sys.stderr)
        return 1
    _, lam_max, _, _ = solver.penalty_eval(problem, y, 1, rho=1.0)
    delta4 = max(lam_max, 0.0)
    by = float(problem.b @ y)
    doc = {"delta4": delta4}
    deltas = [delta4]
    x = sol.get("X")
    if x is not None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (problem.n, problem.n):
            print(f"error: solution X has shape {x.shape}, expected "
                  f"({problem.n}, {problem.n})", file=sys.stderr)
            return 1
        from .linalg import apply_A
        resid = apply_A(problem.op, x) - problem.b
        doc["delta1"] = float(np.linalg.norm(resid)) \
            / (1.0 + float(np.linalg.norm(problem.b)))
        deltas.append(doc["delta1"])
    primal_obj = sol.get("objective_primal", sol.get("planted_objective"))
    if primal_obj is not None:
        au = float(primal_obj)
        delta5 = abs(au - by) / (1.0 + abs(au) + abs(by))
        doc["delta5"] = delta5
        deltas.append(delta5)
    print(json.dumps(doc, indent=2))
    return 0 if max(deltas) <= args.eps else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polybundle",
        description="Polyhedral bundle method for standard-form SDP",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve an SDPA or manifest instance")
    p_solve.add_argument("input")
    _add_solver_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_gen = sub.add_parser("generate", help="generate a planted random instance")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--m", type=int, required=True)
    p_gen.add_argument("--r", type=int, required=True)
    p_gen.add_argument("--sparsity", type=float, required=True)
    p_gen.add_argument("--s", type=float, default=1.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", default=".")
    p_gen.set_defaults(func=cmd_generate)

    p_mc = sub.add_parser("maxcut", help="solve the Max-Cut relaxation of a Gset graph")
    p_mc.add_argument("input")
    p_mc.add_argument("--sense", choices=("paper", "maximize"), default="paper")
    _add_solver_flags(p_mc)
    p_mc.set_defaults(func=cmd_maxcut)

    p_chk = sub.add_parser("check", help="verify a solution file against an instance")
    p_chk.add_argument("input")
    p_chk.add_argument("solution")
    p_chk.add_argument("--eps", type=float, default=1e-4)
    p_chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
