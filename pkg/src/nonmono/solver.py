"""Relaxed primal-dual iteration and its traces.

One step from z = (x, y) with stepsizes (gamma, tau) and relaxation lam:

    xb = J_{gamma A}(x - gamma L^T y)
    yb = J_{tau B^{-1}}(y + tau L (2 xb - x))
    z  <- z + lam ((xb, yb) - z)

which is the proximal-point recursion zb = (M + T)^{-1} M z in disguise,
with M the block preconditioner [[I/gamma, -L^T], [-L, I/tau]]. M is
positive definite when gamma tau |L|^2 < 1 and positive semidefinite with
kernel dimension equal to the multiplicity of the top singular value when
equality holds. In the semidefinite mode only the projection of z onto
range(M) is meaningful; the shadow vector below is exactly that component
in well-scaled coordinates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .numlin import GroupedSvd, grouped_svd
from .ops import AffineOp, BoxNormalCone, ResolventOracle, SingularResolvent
from .rules import EQ_TOL, StepsizePlan

EPS_RES = 1e-8
MAX_ITER = 100_000
DIVERGENCE_FACTOR = 1e8
HISTORY_DIM_CAP = 64


class WrongBranch(Exception):
    """A semidefinite-only quantity was required in the definite branch."""


class NotGeometric(Exception):
    """The series does not decay at a clean geometric rate."""


@dataclass(frozen=True, eq=False)
class PdProblem:
    """One composite inclusion 0 in A x + L^T B L x.

    resA resolves A on the primal space and resBinv resolves B^{-1} on the
    dual space. A and B keep the structural operator objects when known
    (needed for matrix forms and certificates); solution is an optional
    reference primal-dual pair.
    """

    L: np.ndarray
    svd: GroupedSvd
    resA: ResolventOracle
    resBinv: ResolventOracle
    A: object = None
    B: object = None
    solution: tuple[np.ndarray, np.ndarray] | None = None
    name: str = ""

    @property
    def n(self) -> int:
        return self.L.shape[1]

    @property
    def m(self) -> int:
        return self.L.shape[0]


def make_problem(L, A, B, solution=None, name="") -> PdProblem:
    """Assemble a PdProblem from operator objects with closed-form resolvents."""
    L = np.asarray(L, dtype=float)
    if not isinstance(A, AffineOp):
        raise TypeError("A must be affine (only family with a primal resolvent here)")
    if not isinstance(B, (AffineOp, BoxNormalCone)):
        raise TypeError("B must be affine or a box normal cone")
    if A.dim != L.shape[1] or B.dim != L.shape[0]:
        raise ValueError("operator dimensions do not match L")
    if solution is not None:
        solution = (np.asarray(solution[0], dtype=float), np.asarray(solution[1], dtype=float))
    return PdProblem(
        L=L,
        svd=grouped_svd(L),
        resA=A.oracle(),
        resBinv=B.inverse_oracle(),
        A=A,
        B=B,
        solution=solution,
        name=name,
    )


def _is_semidefinite(svd: GroupedSvd, gamma: float, tau: float) -> bool:
    s = gamma * tau * svd.norm ** 2
    if s > 1.0 + EQ_TOL:
        from .rules import StepsizeOutOfRange
        raise StepsizeOutOfRange(f"gamma tau |L|^2 = {s} exceeds one")
    return abs(s - 1.0) <= EQ_TOL


def assemble_preconditioner(L, svd: GroupedSvd, gamma: float, tau: float):
    """Preconditioner M and an orthonormal basis U of range(M).

    In the definite mode U is the identity. In the semidefinite mode the
    kernel of M is spanned by (sqrt(gamma/tau) X_1, Y_1) and U drops it:
    the first block mixes the top singular pair, the remaining columns
    embed the lower singular directions and both kernels.
    """
    L = np.asarray(L, dtype=float)
    m, n = L.shape
    M = np.block([[np.eye(n) / gamma, -L.T], [-L, np.eye(m) / tau]])
    if not _is_semidefinite(svd, gamma, tau):
        return M, np.eye(n + m)
    _, X1, Y1 = svd.block(0)
    m1 = X1.shape[1]
    scale = math.sqrt(tau / (gamma + tau))
    top = scale * np.vstack([X1, -math.sqrt(gamma / tau) * Y1])
    X_rest = np.hstack([svd.X[:, m1:], svd.Xp])
    Y_rest = np.hstack([svd.Y[:, m1:], svd.Yp])
    U = np.hstack([
        top,
        np.vstack([X_rest, np.zeros((m, X_rest.shape[1]))]),
        np.vstack([np.zeros((n, Y_rest.shape[1])), Y_rest]),
    ])
    return M, U


def shadow(problem: PdProblem, gamma: float, tau: float, z, require: bool = False):
    """Well-scaled coordinates of the meaningful component of z.

    Semidefinite mode: s = (X_1^T x - sqrt(gamma/tau) Y_1^T y, rest of the
    X directions applied to x, rest of the Y directions applied to y), of
    dimension n + m - m_1. Definite mode: z itself, flagged False (or
    WrongBranch when required).
    """
    z = np.asarray(z, dtype=float)
    svd = problem.svd
    if not _is_semidefinite(svd, gamma, tau):
        if require:
            raise WrongBranch("shadow coordinates need the semidefinite mode")
        return z.copy(), False
    n = problem.n
    x, y = z[:n], z[n:]
    _, X1, Y1 = svd.block(0)
    m1 = X1.shape[1]
    head = X1.T @ x - math.sqrt(gamma / tau) * (Y1.T @ y)
    x_rest = np.hstack([svd.X[:, m1:], svd.Xp]).T @ x
    y_rest = np.hstack([svd.Y[:, m1:], svd.Yp]).T @ y
    return np.concatenate([head, x_rest, y_rest]), True


def cpa_step(problem: PdProblem, gamma: float, tau: float, lam: float, x, y):
    """One relaxed step; returns (xbar, ybar, x_next, y_next)."""
    xbar = problem.resA(gamma, x - gamma * (problem.L.T @ y))
    ybar = problem.resBinv(tau, y + tau * (problem.L @ (2.0 * xbar - x)))
    return xbar, ybar, x + lam * (xbar - x), y + lam * (ybar - y)


def pppa_step(T, M, lam: float, z, offset=None):
    """Proximal-point form of the same step for a linear operator matrix T.

    Solves (M + T) zb = M z - offset and relaxes. Returns (zb, z_next).
    """
    T = np.asarray(T, dtype=float)
    M = np.asarray(M, dtype=float)
    z = np.asarray(z, dtype=float)
    G = M + T
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularResolvent("M + T is numerically singular")
    rhs = M @ z if offset is None else M @ z - np.asarray(offset, dtype=float)
    zbar = np.linalg.solve(G, rhs)
    return zbar, z + lam * (zbar - z)


@dataclass(eq=False)
class IterateTrace:
    """Recorded run of the iteration.

    status is one of "converged", "diverged", "max_iter" (plus "aborted" on
    the partial trace attached to a propagated resolvent error). res_norms[k] is
    |M (z^k - zb^k)|, projdiff_norms[k] the same difference projected onto
    range(M) and shadow_norms[k] the shadow of z^k (plain |z^k| in the
    definite mode). Iterates are kept when the space is small.
    """

    status: str
    iters: int
    res_norms: np.ndarray
    projdiff_norms: np.ndarray
    shadow_norms: np.ndarray
    z_final: np.ndarray
    zbar_final: np.ndarray
    plan: StepsizePlan
    n: int
    m: int
    xs: np.ndarray | None = None
    ys: np.ndarray | None = None
    xbars: np.ndarray | None = None
    ybars: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def write_csv(self, path) -> None:
        """Delimited trace: k, res_norm, projdiff_norm, shadow_norm, then
        the iterate columns x_i, y_j when history was kept."""
        with_history = self.xs is not None
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["k", "res_norm", "projdiff_norm", "shadow_norm"]
            if with_history:
                header += [f"x_{i}" for i in range(self.n)]
                header += [f"y_{j}" for j in range(self.m)]
            w.writerow(header)
            for k in range(len(self.res_norms)):
                row = [k, repr(float(self.res_norms[k])),
                       repr(float(self.projdiff_norms[k])),
                       repr(float(self.shadow_norms[k]))]
                if with_history:
                    row += [repr(float(v)) for v in self.xs[k]]
                    row += [repr(float(v)) for v in self.ys[k]]
                w.writerow(row)


def run(problem: PdProblem, plan: StepsizePlan, z0=None,
        max_iter: int = MAX_ITER, eps_res: float = EPS_RES,
        divergence_factor: float = DIVERGENCE_FACTOR,
        keep_history: bool | None = None) -> IterateTrace:
    """Iterate until the residual |M (z - zb)| drops below eps_res.

    Divergence is declared when the range(M) component of z exceeds
    divergence_factor * (1 + |z0|); kernel growth alone never trips it.
    """
    n, m = problem.n, problem.m
    gamma, tau, lam = plan.gamma, plan.tau, plan.lam
    L = problem.L
    M, U = assemble_preconditioner(L, problem.svd, gamma, tau)
    semidef = U.shape[1] < n + m

    if z0 is None:
        z0 = np.zeros(n + m)
    z = np.asarray(z0, dtype=float).copy()
    if z.shape != (n + m,):
        raise ValueError(f"z0 must have length {n + m}")
    cap = divergence_factor * (1.0 + float(np.linalg.norm(z)))
    if keep_history is None:
        keep_history = n + m <= HISTORY_DIM_CAP

    res_norms, proj_norms, shadow_norms = [], [], []
    xs, ys, xbars, ybars = [], [], [], []
    status = "max_iter"
    x, y = z[:n], z[n:]
    xbar, ybar = x, y
    iters = 0
    for k in range(int(max_iter)):
        x, y = z[:n], z[n:]
        try:
            xbar, ybar, xn, yn = cpa_step(problem, gamma, tau, lam, x, y)
        except SingularResolvent as err:
            # abort, but keep what was recorded so the failure is inspectable
            err.partial_trace = IterateTrace(
                status="aborted", iters=k,
                res_norms=np.array(res_norms),
                projdiff_norms=np.array(proj_norms),
                shadow_norms=np.array(shadow_norms),
                z_final=z.copy(), zbar_final=np.concatenate([xbar, ybar]),
                plan=plan, n=n, m=m,
            )
            raise
        dx, dy = x - xbar, y - ybar
        vx = dx / gamma - L.T @ dy
        vy = -L @ dx + dy / tau
        res = math.hypot(float(np.linalg.norm(vx)), float(np.linalg.norm(vy)))
        dz = np.concatenate([dx, dy])
        proj = float(np.linalg.norm(U.T @ dz)) if semidef else float(np.linalg.norm(dz))
        s, _ = shadow(problem, gamma, tau, z)
        res_norms.append(res)
        proj_norms.append(proj)
        shadow_norms.append(float(np.linalg.norm(s)))
        if keep_history:
            xs.append(x.copy())
            ys.append(y.copy())
            xbars.append(xbar.copy())
            ybars.append(ybar.copy())
        iters = k + 1
        if res <= eps_res:
            status = "converged"
            break
        z = np.concatenate([xn, yn])
        z_meaningful = float(np.linalg.norm(U.T @ z)) if semidef else float(np.linalg.norm(z))
        if z_meaningful > cap:
            status = "diverged"
            break

    return IterateTrace(
        status=status,
        iters=iters,
        res_norms=np.array(res_norms),
        projdiff_norms=np.array(proj_norms),
        shadow_norms=np.array(shadow_norms),
        z_final=z.copy(),
        zbar_final=np.concatenate([xbar, ybar]),
        plan=plan,
        n=n,
        m=m,
        xs=np.array(xs) if keep_history and xs else None,
        ys=np.array(ys) if keep_history and ys else None,
        xbars=np.array(xbars) if keep_history and xbars else None,
        ybars=np.array(ybars) if keep_history and ybars else None,
    )


def min_residual_rate(trace: IterateTrace):
    """Running N * min_{k <= N} |v|^2, the square-summability diagnostic.

    Not applicable to diverged runs (returns None).
    """
    if trace.status == "diverged":
        return None
    sq = trace.res_norms ** 2
    return np.minimum.accumulate(sq) * (np.arange(len(sq)) + 1.0)


def rlinear_fit(series) -> float:
    """Geometric decay rate of a positive series by log-linear regression.

    The first fifth is discarded as burn-in, nonpositive entries are
    skipped, and the fit must explain the tail (R^2 >= 0.98) with a rate
    q in (0, 1); otherwise NotGeometric is raised.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1 or len(arr) < 10:
        raise NotGeometric("series too short for a rate fit")
    start = int(0.2 * len(arr))
    tail = arr[start:]
    ks = np.arange(start, len(arr))
    mask = tail > 0.0
    if mask.sum() < 5:
        raise NotGeometric("not enough positive entries")
    ks, vals = ks[mask], np.log(tail[mask])
    if np.ptp(vals) == 0.0:
        raise NotGeometric("constant series")
    b, a = np.polyfit(ks, vals, 1)
    pred = a + b * ks
    ss_res = float(np.sum((vals - pred) ** 2))
    ss_tot = float(np.sum((vals - vals.mean()) ** 2))
    if ss_tot <= 0.0 or 1.0 - ss_res / ss_tot < 0.98:
        raise NotGeometric("tail is not log-linear")
    q = math.exp(b)
    if not 0.0 < q < 1.0:
        raise NotGeometric(f"fitted rate {q} is not in (0, 1)")
    return q
