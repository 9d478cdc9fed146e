"""Builtin instances and a JSON schema for user-defined problems.

Each builtin ships the assembled problem together with its reference
data: the known solution, scalar moduli and/or oblique parameters, and
the operator certificates they come from. The four instances cover the
interesting regimes:

    saddle      skew primal operator against a negative definite dual one;
                everything about it is computable in closed form.
    singvals    diagonal family whose stable relaxation window depends on
                the second singular value of L.
    qp-indef    indefinite quadratic over a box, full row rank L.
    qp-rankdef  concave-ish quadratic over a box with rank-deficient L.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .numlin import pinv, sym
from .ops import AffineOp, BoxNormalCone, NotLinear, pd_matrix
from .rules import StepsizePlan, plan_from_moduli, plan_from_oblique
from .semimono import (
    ObliqueParams,
    ScalarModuli,
    SemiCert,
    cert_box_normal_cone,
    derive_oblique_params,
)
from .solver import PdProblem, make_problem


class UnknownName(Exception):
    """No builtin problem goes by that name."""


class MalformedProblem(Exception):
    """The problem description is missing fields or has the wrong shapes."""


@dataclass(eq=False)
class ProblemBundle:
    """A problem plus whatever reference data is known about it."""

    problem: PdProblem
    moduli: ScalarModuli | None = None
    oblique: ObliqueParams | None = None
    oblique_at: Callable[[float], ObliqueParams] | None = None
    certA: SemiCert | None = None
    certB: SemiCert | None = None
    extras: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.problem.name


def dual_from_primal(L, A: AffineOp, x_star) -> np.ndarray:
    """Least-norm dual point with -L^T y* = A x*."""
    x_star = np.asarray(x_star, dtype=float)
    return -pinv(np.asarray(L, dtype=float)).T @ A(x_star)


def probe_matrices(problem: PdProblem):
    """Symmetric parts of the primal, dual and primal-dual operator matrices.

    Negative traces certify that the corresponding inclusion is not
    monotonizable by any change of variables. Needs both operators affine
    and invertible.
    """
    if not isinstance(problem.A, AffineOp) or not isinstance(problem.B, AffineOp):
        raise NotLinear("probe matrices need affine A and B")
    L = problem.L
    DA, DB = problem.A.D, problem.B.D
    T_P = sym(DA + L.T @ DB @ L)
    T_D = sym(np.linalg.inv(DB) + L @ np.linalg.inv(DA) @ L.T)
    T, _ = pd_matrix(problem)
    return T_P, T_D, sym(T)


def _saddle(a=10.0, b=-0.25, c=-0.25, ell=2.0) -> ProblemBundle:
    """Skew 2x2 primal operator against diag(b, b, c), L = ell * [I2; 0].

    The relaxed iteration is an explicit linear dynamical system here, so
    the largest stable relaxation has a closed form: with the gamma-fitted
    oblique parameters below,

        lambda_bar(gamma) = 2 min{1 + beta_P(gamma)/gamma, 1 + c gamma ell^2}.

    The constant (gamma-independent) parameters give the widest certified
    gamma window; the gamma-dependent fit gives the tight relaxation bound
    at each gamma. Reference moduli for the scalar route are shipped too.
    """
    a, b, c, ell = float(a), float(b), float(c), float(ell)
    A = AffineOp([[0.0, a], [-a, 0.0]], [0.0, 0.0])
    B = AffineOp(np.diag([b, b, c]), np.zeros(3))
    L = np.array([[ell, 0.0], [0.0, ell], [0.0, 0.0]])
    problem = make_problem(L, A, B, solution=(np.zeros(2), np.zeros(3)), name="saddle")
    denom = a * a + b * b * ell ** 4
    beta_P_const = b * ell * ell / denom
    beta_D_const = a * a * b / denom

    def beta_P_at(gamma: float) -> float:
        return b * ell * ell * (1.0 + a * a * gamma * gamma) / denom

    def oblique_at(gamma: float) -> ObliqueParams:
        return ObliqueParams(beta_P_at(gamma), math.inf, 0.0, c)

    def lambda_bar(gamma: float) -> float:
        return 2.0 * min(1.0 + beta_P_at(gamma) / gamma, 1.0 + c * gamma * ell * ell)

    # scalar moduli are only certified for the stock parameters
    moduli = ScalarModuli(1.0, -0.04, -0.3, 0.2) if (a, b, c, ell) == (10.0, -0.25, -0.25, 2.0) else None
    return ProblemBundle(
        problem=problem,
        moduli=moduli,
        oblique=ObliqueParams(beta_P_const, math.inf, beta_D_const, c),
        oblique_at=oblique_at,
        extras={
            "lambda_bar": lambda_bar,
            "probe": probe_matrices(problem),
        },
    )


def _singvals(ells=(0.5, 0.2)) -> ProblemBundle:
    """Diagonal instance whose window is set by the singular values of L.

    A = diag(1, 1 + sqrt(1 - ell_i^2), ...), B = A^{-1}, L = diag(1, ells).
    Both certificates below are tight (zero slack), and at gamma = tau = 1
    the relaxation bound from the oblique route is 3 - max(ells) while the
    scalar-moduli route gives the smaller (5 - max(ells)) / 2.
    """
    ells = tuple(float(e) for e in ells)
    assert ells, "need at least one subunit singular value"
    assert all(0.0 < e < 1.0 for e in ells), "ells must lie strictly in (0, 1)"
    diag_A = [1.0] + [1.0 + math.sqrt(1.0 - e * e) for e in ells]
    n = len(diag_A)
    A = AffineOp(np.diag(diag_A), np.zeros(n))
    B = AffineOp(np.diag([1.0 / d for d in diag_A]), np.zeros(n))
    L = np.diag([1.0] + list(ells))
    problem = make_problem(L, A, B, solution=(np.zeros(n), np.zeros(n)), name="singvals")
    half = np.full(n, 0.5)
    certA = SemiCert(0.5 * (L.T @ L), np.diag(half))
    certB = SemiCert(np.diag(half), 0.5 * (L @ L.T))
    sigma2 = max(ells)
    return ProblemBundle(
        problem=problem,
        moduli=ScalarModuli(0.5, 0.5, 0.5, 0.5),
        oblique=ObliqueParams(0.5, math.inf, 0.5, math.inf),
        certA=certA,
        certB=certB,
        extras={
            "lambda_bar_oblique": 3.0 - sigma2,
            "lambda_bar_moduli": (5.0 - sigma2) / 2.0,
            "probe": probe_matrices(problem),
        },
    )


def _qp_indef() -> ProblemBundle:
    """Box-constrained indefinite quadratic with full row rank coupling.

    minimize 1/2 x^T Q x + q^T x subject to L x in [2, 4]^2 with
    Q = diag(1, -1, 2); the global minimizer is x* = (1, 4, 1/2).
    A = Q x + q is certified with matrix M and R (zero slack) and the box
    normal cone at the solution gets its pointwise certificate.
    """
    Q = np.diag([1.0, -1.0, 2.0])
    q = np.array([-1.0, 1.0, -1.0])
    L = np.array([[1.0, 0.25, 0.0], [0.0, 1.0, 0.0]])
    lower = np.array([2.0, 2.0])
    upper = np.array([4.0, 4.0])
    A = AffineOp(Q, q)
    B = BoxNormalCone(lower, upper)
    x_star = np.array([1.0, 4.0, 0.5])
    y_star = dual_from_primal(L, A, x_star)
    problem = make_problem(L, A, B, solution=(x_star, y_star), name="qp-indef")
    certA = SemiCert(np.diag([1.0, -1.0, 0.0]), np.diag([0.0, 0.0, 0.5]))
    certB = cert_box_normal_cone(lower, upper, L @ x_star, y_star)
    return ProblemBundle(
        problem=problem,
        oblique=ObliqueParams(0.0, 0.5, -3.0, math.inf),
        certA=certA,
        certB=certB,
    )


def _qp_rankdef() -> ProblemBundle:
    """Box-constrained quadratic with rank-deficient coupling matrix.

    minimize 1/2 x^T Q x + q^T x subject to L x in [1/2, 1]^3 with
    Q = diag(-3, -2, 1) and rank(L) = 2; the global minimizer is
    x* = (1, 0, 0).

    The scalar moduli (-1, 0, 2, 0) are the reference data for the
    stepsize window (0, 1/6) x (2, 1/(3 gamma)]. Note that mu_B = 2 is a
    regularity statement about the dual operator along the iteration, not
    a pointwise certificate at the shipped dual solution: the pointwise
    box certificate there is diag(2, 1, 3), whose smallest modulus is 1.
    Both are shipped; the window reference uses the scalar moduli.
    """
    Q = np.diag([-3.0, -2.0, 1.0])
    q = np.array([0.0, 1.0, 0.0])
    L = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 0.0]])
    lower = np.full(3, 0.5)
    upper = np.ones(3)
    A = AffineOp(Q, q)
    B = BoxNormalCone(lower, upper)
    x_star = np.array([1.0, 0.0, 0.0])
    y_star = dual_from_primal(L, A, x_star)
    problem = make_problem(L, A, B, solution=(x_star, y_star), name="qp-rankdef")
    certA = SemiCert(-(L.T @ L), np.zeros((3, 3)))
    certB = cert_box_normal_cone(lower, upper, L @ x_star, y_star)
    return ProblemBundle(
        problem=problem,
        moduli=ScalarModuli(-1.0, 0.0, 2.0, 0.0),
        certA=certA,
        certB=certB,
        extras={"pointwise_mu_B": 1.0},
    )


_BUILTINS = {
    "saddle": _saddle,
    "singvals": _singvals,
    "qp-indef": _qp_indef,
    "qp-rankdef": _qp_rankdef,
}


def builtin(name: str, **params) -> ProblemBundle:
    """Assemble a builtin instance with its reference data."""
    key = name.strip().lower().replace("_", "-")
    try:
        factory = _BUILTINS[key]
    except KeyError:
        raise UnknownName(f"no builtin {name!r}; choose from {sorted(_BUILTINS)}") from None
    return factory(**params)


def best_plan(bundle: ProblemBundle, gamma=None, tau=None, lam=None) -> StepsizePlan:
    """Stepsize plan from the strongest reference data the bundle carries.

    Oblique parameters win over scalar moduli (they are never worse);
    matrix certificates are reduced to oblique parameters on the fly.
    """
    svd = bundle.problem.svd
    if bundle.oblique is not None:
        return plan_from_oblique(bundle.oblique, svd, gamma=gamma, tau=tau, lam=lam)
    if bundle.moduli is not None:
        return plan_from_moduli(bundle.moduli, svd, gamma=gamma, tau=tau, lam=lam)
    if bundle.certA is not None and bundle.certB is not None:
        params = derive_oblique_params(bundle.certA, bundle.certB, svd)
        return plan_from_oblique(params, svd, gamma=gamma, tau=tau, lam=lam)
    raise MalformedProblem("bundle carries no certificates to derive a plan from")


def _need(data: dict, key: str, where: str = "problem"):
    if key not in data:
        raise MalformedProblem(f"{where} is missing required field {key!r}")
    return data[key]


def _as_matrix(obj, key: str) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as err:
        raise MalformedProblem(f"field {key!r} is not numeric") from err
    if arr.ndim != 2:
        raise MalformedProblem(f"field {key!r} must be a matrix (list of rows)")
    return arr


def _as_vector(obj, key: str) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as err:
        raise MalformedProblem(f"field {key!r} is not numeric") from err
    if arr.ndim != 1:
        raise MalformedProblem(f"field {key!r} must be a flat vector")
    return arr


def _parse_operator(data: dict, key: str, dim: int, primal: bool):
    spec = _need(data, key)
    if not isinstance(spec, dict):
        raise MalformedProblem(f"field {key!r} must be an object with a 'type'")
    kind = _need(spec, "type", where=key)
    if kind == "affine":
        D = _as_matrix(_need(spec, "D", where=key), f"{key}.D")
        qv = _as_vector(_need(spec, "q", where=key), f"{key}.q")
        if D.shape != (dim, dim) or qv.shape != (dim,):
            raise MalformedProblem(f"{key} dimensions do not match L")
        return AffineOp(D, qv)
    if kind == "box_normal_cone":
        if primal:
            raise MalformedProblem("A must be affine (box_normal_cone is only supported for B)")
        lo = _as_vector(_need(spec, "l", where=key), f"{key}.l")
        up = _as_vector(_need(spec, "u", where=key), f"{key}.u")
        if lo.shape != (dim,) or up.shape != (dim,):
            raise MalformedProblem(f"{key} bounds do not match L")
        try:
            return BoxNormalCone(lo, up)
        except AssertionError as err:
            raise MalformedProblem(f"{key}: {err}") from err
    raise MalformedProblem(f"{key}.type must be 'affine' or 'box_normal_cone', got {kind!r}")


def _parse_point(spec: dict, key: str):
    if spec is None:
        return None
    xv = _as_vector(_need(spec, "x", where=key), f"{key}.x")
    vv = _as_vector(_need(spec, "v", where=key), f"{key}.v")
    return (xv, vv)


def load_problem(source) -> ProblemBundle:
    """Build a bundle from a JSON file path or an already-parsed dict."""
    name = ""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise MalformedProblem(f"no such problem file: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise MalformedProblem(f"{path} is not valid JSON: {err}") from err
        name = path.stem
    elif isinstance(source, dict):
        data = source
        name = str(data.get("name", ""))
    else:
        raise TypeError("source must be a path or a dict")
    if not isinstance(data, dict):
        raise MalformedProblem("top-level JSON value must be an object")

    L = _as_matrix(_need(data, "L"), "L")
    m, n = L.shape
    A = _parse_operator(data, "A", n, primal=True)
    B = _parse_operator(data, "B", m, primal=False)

    solution = None
    if "solution" in data and data["solution"] is not None:
        sol = data["solution"]
        if not isinstance(sol, dict):
            raise MalformedProblem("solution must be an object with 'x' and 'y'")
        xv = _as_vector(_need(sol, "x", where="solution"), "solution.x")
        yv = _as_vector(_need(sol, "y", where="solution"), "solution.y")
        if xv.shape != (n,) or yv.shape != (m,):
            raise MalformedProblem("solution dimensions do not match L")
        solution = (xv, yv)

    try:
        problem = make_problem(L, A, B, solution=solution, name=name)
    except (ValueError, AssertionError) as err:
        raise MalformedProblem(str(err)) from err

    moduli = None
    certA = certB = None
    certs = _need(data, "certificates")
    if not isinstance(certs, dict) or not ("scalar" in certs or "matrix" in certs):
        raise MalformedProblem("certificates must contain 'scalar' or 'matrix'")
    if "scalar" in certs:
        sc = certs["scalar"]
        moduli = ScalarModuli(
            float(_need(sc, "muA", where="certificates.scalar")),
            float(_need(sc, "rhoA", where="certificates.scalar")),
            float(_need(sc, "muB", where="certificates.scalar")),
            float(_need(sc, "rhoB", where="certificates.scalar")),
        )
    if "matrix" in certs:
        mc = certs["matrix"]
        MA = _as_matrix(_need(mc, "MA", where="certificates.matrix"), "MA")
        RA = _as_matrix(_need(mc, "RA", where="certificates.matrix"), "RA")
        MB = _as_matrix(_need(mc, "MB", where="certificates.matrix"), "MB")
        RB = _as_matrix(_need(mc, "RB", where="certificates.matrix"), "RB")
        if MA.shape != (n, n) or RA.shape != (n, n):
            raise MalformedProblem("MA and RA must be n x n")
        if MB.shape != (m, m) or RB.shape != (m, m):
            raise MalformedProblem("MB and RB must be m x m")
        certA = SemiCert(MA, RA, point=_parse_point(mc.get("pointA"), "pointA"))
        certB = SemiCert(MB, RB, point=_parse_point(mc.get("pointB"), "pointB"))

    return ProblemBundle(problem=problem, moduli=moduli, certA=certA, certB=certB)


def save_problem(bundle: ProblemBundle) -> dict:
    """Serialize a bundle back to the JSON schema (inverse of load_problem)."""
    problem = bundle.problem
    out: dict = {"L": problem.L.tolist()}
    if isinstance(problem.A, AffineOp):
        out["A"] = {"type": "affine", "D": problem.A.D.tolist(), "q": problem.A.q.tolist()}
    else:
        raise NotLinear("only affine A can be serialized")
    if isinstance(problem.B, AffineOp):
        out["B"] = {"type": "affine", "D": problem.B.D.tolist(), "q": problem.B.q.tolist()}
    elif isinstance(problem.B, BoxNormalCone):
        out["B"] = {"type": "box_normal_cone", "l": problem.B.l.tolist(), "u": problem.B.u.tolist()}
    else:
        raise NotLinear("unknown B operator type")
    certs: dict = {}
    if bundle.moduli is not None:
        certs["scalar"] = {
            "muA": bundle.moduli.mu_A, "rhoA": bundle.moduli.rho_A,
            "muB": bundle.moduli.mu_B, "rhoB": bundle.moduli.rho_B,
        }
    if bundle.certA is not None and bundle.certB is not None:
        mc = {
            "MA": bundle.certA.M.tolist(), "RA": bundle.certA.R.tolist(),
            "MB": bundle.certB.M.tolist(), "RB": bundle.certB.R.tolist(),
        }
        if bundle.certA.point is not None:
            mc["pointA"] = {"x": list(map(float, bundle.certA.point[0])),
                            "v": list(map(float, bundle.certA.point[1]))}
        if bundle.certB.point is not None:
            mc["pointB"] = {"x": list(map(float, bundle.certB.point[0])),
                            "v": list(map(float, bundle.certB.point[1]))}
        certs["matrix"] = mc
    if certs:
        out["certificates"] = certs
    if problem.solution is not None:
        out["solution"] = {"x": problem.solution[0].tolist(), "y": problem.solution[1].tolist()}
    if problem.name:
        out["name"] = problem.name
    return out


def resolve_problem(arg: str) -> ProblemBundle:
    """CLI-style lookup: 'builtin:<name>' or a path to a JSON file."""
    if arg.startswith("builtin:"):
        return builtin(arg.split(":", 1)[1])
    return load_problem(arg)
