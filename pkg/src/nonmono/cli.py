"""Command-line front end.

    nonmono solve    --problem <file|builtin:name> [--gamma G] [--tau T|max]
                     [--lambda L] [--max-iter N] [--eps E] --out trace.csv
    nonmono window   --problem ... [--gamma G]
    nonmono certify  --matrix D.json --M M.json [--R R.json | --optimal-R]
    nonmono spectral --problem ... --gamma G [--tau T|max] [--projected]
    nonmono report   --trace trace.csv [--out-dir DIR]

All numeric JSON output is full double precision; unbounded window ends
are emitted as null. Exit codes: 0 success/converged, 1 failed check or
iteration budget exhausted, 2 diverged, 3 invalid stepsize plan (the
message names the violated condition), 64 malformed input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import NoStableLambda, SingularOperator, tight_lambda
from .ops import NotLinear
from .problems import (
    MalformedProblem,
    UnknownName,
    best_plan,
    resolve_problem,
)
from .rules import (
    CaseViolated,
    EmptyWindow,
    ExistenceViolated,
    RequestedOutOfWindow,
    StepsizeOutOfRange,
)
from .semimono import (
    Infeasible,
    InvalidModuli,
    cert_linear_optimal_R,
    check_linear_cert,
    linear_cert_slack,
)
from .solver import run

PLAN_ERRORS = (ExistenceViolated, RequestedOutOfWindow, EmptyWindow,
               StepsizeOutOfRange, CaseViolated, InvalidModuli)
INPUT_ERRORS = (MalformedProblem, UnknownName)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_DIVERGED = 2
EXIT_BAD_PLAN = 3
EXIT_USAGE = 64


def _jsonify(obj):
    """Recursively make obj JSON-clean: numpy to native, +-inf to null."""
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return None if math.isinf(f) else f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _emit(payload: dict) -> None:
    print(json.dumps(_jsonify(payload)))


def _fail(code: int, message: str, **extra) -> int:
    payload = {"error": message}
    payload.update(extra)
    print(json.dumps(_jsonify(payload)), file=sys.stderr)
    return code


def _parse_tau(raw):
    if raw is None or raw == "max":
        return raw
    try:
        return float(raw)
    except ValueError:
        raise MalformedProblem(f"--tau must be a number or 'max', got {raw!r}") from None


def _load_matrix_file(path: str, what: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise MalformedProblem(f"no such file for {what}: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise MalformedProblem(f"{what} file {path} is not valid JSON: {err}") from err
    arr = np.array(data, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise MalformedProblem(f"{what} file {path} must hold a square matrix")
    return arr


def cmd_solve(args) -> int:
    try:
        bundle = resolve_problem(args.problem)
        tau = _parse_tau(args.tau)
    except INPUT_ERRORS as err:
        return _fail(EXIT_USAGE, str(err), schema="see README: JSON problem schema")
    # gamma and tau must pass validation (they decide well-posedness of the
    # preconditioner); a requested lambda outside the certified window is
    # still runnable and simply diverges, so it bypasses the window check.
    try:
        plan = best_plan(bundle, gamma=args.gamma, tau=tau)
    except PLAN_ERRORS as err:
        return _fail(EXIT_BAD_PLAN, str(err), condition=type(err).__name__)
    if args.lam is not None:
        if not args.lam > 0.0:
            return _fail(EXIT_BAD_PLAN, f"lambda must be positive, got {args.lam}",
                         condition="RequestedOutOfWindow")
        plan = dataclasses.replace(plan, lam=float(args.lam))
    problem = bundle.problem
    z0 = np.ones(problem.n + problem.m)
    trace = run(problem, plan, z0=z0, max_iter=args.max_iter, eps_res=args.eps)
    trace.write_csv(args.out)
    _emit({
        "status": trace.status,
        "iters": trace.iters,
        "final_residual": float(trace.res_norms[-1]) if len(trace.res_norms) else None,
        "plan": plan.to_dict(),
    })
    if trace.status == "converged":
        return EXIT_OK
    if trace.status == "diverged":
        return EXIT_DIVERGED
    return EXIT_FAIL


def cmd_window(args) -> int:
    try:
        bundle = resolve_problem(args.problem)
    except INPUT_ERRORS as err:
        return _fail(EXIT_USAGE, str(err))
    try:
        plan = best_plan(bundle, gamma=args.gamma)
    except PLAN_ERRORS as err:
        return _fail(EXIT_BAD_PLAN, str(err), condition=type(err).__name__)
    _emit({
        "gamma": [plan.gamma_lo, plan.gamma_hi],
        f"tau_at_{plan.gamma!r}": [plan.tau_lo, plan.tau_hi],
        "eta": plan.eta,
        "eta_prime": plan.eta_prime,
        "eta_bar": plan.eta_bar,
        "lambda": [0.0, 2.0 * plan.eta_bar],
        "source": plan.source,
    })
    return EXIT_OK


def cmd_certify(args) -> int:
    try:
        D = _load_matrix_file(args.matrix, "--matrix")
        M = _load_matrix_file(args.M, "--M")
        if D.shape != M.shape:
            raise MalformedProblem("--matrix and --M must have matching shapes")
        if args.optimal_R:
            R = None
        else:
            R = _load_matrix_file(args.R, "--R") if args.R else np.zeros_like(D)
            if R.shape != D.shape:
                raise MalformedProblem("--R must match the operator shape")
    except INPUT_ERRORS as err:
        return _fail(EXIT_USAGE, str(err))
    if R is not None:
        slack = linear_cert_slack(D, M, R)
        ok = check_linear_cert(D, M, R)
        _emit({"certified": bool(ok), "slack": slack})
        return EXIT_OK if ok else EXIT_FAIL
    try:
        cert = cert_linear_optimal_R(D, M)
    except Infeasible as err:
        return _fail(EXIT_FAIL, str(err), condition="Infeasible")
    _emit({"R_star": cert.R, "slack": linear_cert_slack(D, M, cert.R)})
    return EXIT_OK


def cmd_spectral(args) -> int:
    try:
        bundle = resolve_problem(args.problem)
        tau = _parse_tau(args.tau)
    except INPUT_ERRORS as err:
        return _fail(EXIT_USAGE, str(err))
    try:
        plan = best_plan(bundle, gamma=args.gamma, tau=tau)
    except PLAN_ERRORS as err:
        return _fail(EXIT_BAD_PLAN, str(err), condition=type(err).__name__)
    try:
        lam_spectral = tight_lambda(bundle.problem, plan.gamma, plan.tau,
                                    projected=args.projected)
    except NotLinear as err:
        return _fail(EXIT_USAGE, f"spectral analysis needs affine A and B: {err}")
    except NoStableLambda as err:
        return _fail(EXIT_FAIL, str(err), lambda_theorem=2.0 * plan.eta_bar)
    except SingularOperator as err:
        return _fail(EXIT_FAIL, str(err))
    theorem = 2.0 * plan.eta_bar
    _emit({
        "lambda_theorem": theorem,
        "lambda_spectral": lam_spectral,
        "slack": lam_spectral - theorem,
    })
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render_report
    try:
        figures = render_report(args.trace, out_dir=args.out_dir)
    except (OSError, ValueError) as err:
        return _fail(EXIT_USAGE, f"cannot render report: {err}")
    _emit({"figures": figures})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nonmono",
        description="Primal-dual splitting for composite inclusions beyond monotonicity.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run the iteration and write a CSV trace")
    ps.add_argument("--problem", required=True, help="JSON file or builtin:<name>")
    ps.add_argument("--gamma", type=float, default=None)
    ps.add_argument("--tau", default=None, help="number or 'max' for the semidefinite branch")
    ps.add_argument("--lambda", dest="lam", type=float, default=None)
    ps.add_argument("--max-iter", type=int, default=100_000)
    ps.add_argument("--eps", type=float, default=1e-8)
    ps.add_argument("--out", required=True, help="trace CSV path")
    ps.set_defaults(func=cmd_solve)

    pw = sub.add_parser("window", help="print the certified stepsize windows as JSON")
    pw.add_argument("--problem", required=True)
    pw.add_argument("--gamma", type=float, default=None)
    pw.set_defaults(func=cmd_window)

    pc = sub.add_parser("certify", help="check or synthesize a linear certificate")
    pc.add_argument("--matrix", required=True, help="JSON file with the operator matrix D")
    pc.add_argument("--M", required=True, help="JSON file with the lower modulus matrix")
    group = pc.add_mutually_exclusive_group()
    group.add_argument("--R", default=None, help="JSON file with the upper modulus matrix")
    group.add_argument("--optimal-R", action="store_true",
                       help="synthesize the dominant R instead of checking one")
    pc.set_defaults(func=cmd_certify)

    pp = sub.add_parser("spectral", help="tight relaxation bound vs the certified one")
    pp.add_argument("--problem", required=True)
    pp.add_argument("--gamma", type=float, required=True)
    pp.add_argument("--tau", default=None)
    pp.add_argument("--projected", action="store_true",
                    help="spectral radius on range(M) only")
    pp.set_defaults(func=cmd_spectral)

    pr = sub.add_parser("report", help="render figures from a trace CSV")
    pr.add_argument("--trace", required=True)
    pr.add_argument("--out-dir", default=None)
    pr.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
