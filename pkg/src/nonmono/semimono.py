"""Semimonotonicity certificates and their calculus.

A certificate (M, R) for an operator T claims

    <x - xb, v - vb>  >=  |x - xb|^2_M + |v - vb|^2_R

for all (x, v) in graph T, either against a fixed anchor (xb, vb) in the
graph (pointwise scope) or for every pair of graph points (global scope).
M penalizes the primal displacement and R the image displacement; either
matrix may be indefinite, which is the whole point.

The calculus below transports certificates through inversion, scaling,
cartesian products, sums, parallel sums, congruence D T D^T and a few
special forms, and finally projects a pair of certificates for A and B
onto the four oblique parameters that drive the stepsize rules.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import block_diag

from .numlin import (
    RANK_TOL,
    GroupedSvd,
    NotParallelSummable,
    matrix_rank,
    max_eig_sym,
    min_eig_sym,
    parallel_sum_matrix,
    parallel_sum_scalar,
    pinv,
    scalar_summable,
    sym,
)
from .ops import DimensionMismatch


class InvalidModuli(Exception):
    """The requested moduli fail a validity precondition."""


class Infeasible(Exception):
    """The linear matrix inequality admits no solution."""


class RangeConditionViolated(Exception):
    """A matrix is not supported on the subspace the construction needs."""


class NotInGraph(Exception):
    """The proposed anchor is not a graph point of the operator."""


def pos(x: float) -> float:
    """Positive part [x]_+ = max(x, 0); +inf passes through, [-inf]_+ = 0."""
    return max(float(x), 0.0)


def neg(x: float) -> float:
    """Negative part [x]_- = max(-x, 0), so [x]_- = 0 for any x >= 0."""
    return max(-float(x), 0.0)


def rng_from_env(default_seed: int = 20260819) -> np.random.Generator:
    """RNG for sampled validators; NONMONO_SEED overrides the fixed default."""
    return np.random.default_rng(int(os.environ.get("NONMONO_SEED", default_seed)))


@dataclass(frozen=True, eq=False)
class SemiCert:
    """One semimonotonicity certificate.

    point is the (xb, vb) graph anchor, or None for a global certificate.
    universal marks the unconditional kind that holds for every operator.
    """

    M: np.ndarray
    R: np.ndarray
    point: tuple[np.ndarray, np.ndarray] | None = None
    subject: str = ""
    universal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "M", sym(self.M))
        object.__setattr__(self, "R", sym(self.R))
        if self.point is not None:
            xb, vb = self.point
            object.__setattr__(
                self,
                "point",
                (np.asarray(xb, dtype=float), np.asarray(vb, dtype=float)),
            )

    @property
    def dim_primal(self) -> int:
        return self.M.shape[0]

    @property
    def dim_image(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class ScalarModuli:
    """Scalar moduli quadruple for the structured primal-dual assumption.

    A carries (mu_A * L^T L, rho_A * I) and B carries (mu_B * I, rho_B * L L^T).
    """

    mu_A: float
    rho_A: float
    mu_B: float
    rho_B: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mu_A, self.rho_A, self.mu_B, self.rho_B)


@dataclass(frozen=True)
class ObliqueParams:
    """The four scalars shaping the oblique metric of the weak Minty condition.

    beta_P weights the range(L^T) block and beta_D the range(L) block; the
    primed entries weight the kernels and may carry math.inf when the
    matching kernel is empty (no constraint in that direction).
    """

    beta_P: float
    beta_Pp: float
    beta_D: float
    beta_Dp: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.beta_P, self.beta_Pp, self.beta_D, self.beta_Dp)


def _scalar_dom_box(a: float, b: float) -> bool:
    """Effective domain of the scalar parallel sum: summable with sum >= 0."""
    return scalar_summable(a, b) and (a + b >= 0.0 or (a == 0.0 and b == 0.0))


def _matrix_dom_box(A, B) -> None:
    """Raise NotParallelSummable unless (A, B) has a PSD sum and is summable."""
    if min_eig_sym(sym(A) + sym(B)) < -1e-10:
        raise NotParallelSummable("the sum of the pair is not positive semidefinite")
    parallel_sum_matrix(A, B)


def linear_cert_slack(D, M, R) -> float:
    """Smallest eigenvalue of 0.5 (D + D^T) - M - D^T R D."""
    D = np.asarray(D, dtype=float)
    M = sym(M)
    R = sym(R)
    if D.shape != M.shape or D.shape != R.shape:
        raise DimensionMismatch("D, M, R must share one square shape")
    return min_eig_sym(0.5 * (D + D.T) - M - D.T @ R @ D)


def check_linear_cert(D, M, R, tol: float = 1e-9) -> bool:
    """Whether the linear map x -> D x is (M, R)-semimonotone."""
    return linear_cert_slack(D, M, R) >= -tol


def universal_cert(n: int, M, R) -> SemiCert:
    """Certificate that holds for every operator on R^n.

    Requires R < 0, M < 0 and M <= (1/4) R^{-1}; scalars broadcast to
    multiples of the identity. The quarter-inverse boundary is allowed.
    """
    if np.isscalar(M):
        M = float(M) * np.eye(n)
    if np.isscalar(R):
        R = float(R) * np.eye(n)
    M = sym(M)
    R = sym(R)
    if M.shape != (n, n) or R.shape != (n, n):
        raise DimensionMismatch("universal certificate matrices must be n x n")
    if max_eig_sym(R) >= 0.0:
        raise InvalidModuli("R must be negative definite")
    if max_eig_sym(M) >= 0.0:
        raise InvalidModuli("M must be negative definite")
    quarter_inv = 0.25 * np.linalg.inv(R)
    if min_eig_sym(quarter_inv - M) < -1e-10:
        raise InvalidModuli("M must satisfy M <= (1/4) R^{-1}")
    return SemiCert(M, R, point=None, universal=True)


def cert_inverse(c: SemiCert) -> SemiCert:
    """Certificate of T^{-1}: moduli and anchor coordinates swap."""
    point = None if c.point is None else (c.point[1], c.point[0])
    return SemiCert(c.R, c.M, point=point, subject=c.subject, universal=c.universal)


def cert_scale_shift(c: SemiCert, alpha: float, u, w) -> SemiCert:
    """Certificate of T(x) = w + alpha A(x + u) for alpha > 0.

    Moduli become (alpha M, R / alpha); a pointwise anchor moves to
    (xb - u, w + alpha vb).
    """
    if not alpha > 0:
        raise InvalidModuli("scaling factor must be positive")
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    point = None
    if c.point is not None:
        xb, vb = c.point
        point = (xb - u, w + alpha * vb)
    return SemiCert(alpha * c.M, c.R / alpha, point=point, subject=c.subject)


def cert_cartesian(cA: SemiCert, cB: SemiCert) -> SemiCert:
    """Certificate of A x B with block-diagonal moduli."""
    point = None
    if cA.point is not None and cB.point is not None:
        point = (
            np.concatenate([cA.point[0], cB.point[0]]),
            np.concatenate([cA.point[1], cB.point[1]]),
        )
    return SemiCert(block_diag(cA.M, cB.M), block_diag(cA.R, cB.R), point=point)


def cert_sum(cA: SemiCert, cB: SemiCert) -> SemiCert:
    """Certificate of A + B: (M_A + M_B, R_A # R_B).

    Needs (R_A, R_B) in the parallel-sum domain. Pointwise inputs must
    share the primal anchor; image anchors add.
    """
    if cA.M.shape != cB.M.shape:
        raise DimensionMismatch("sum needs operators on the same space")
    if min_eig_sym(cA.R + cB.R) < -1e-10:
        raise NotParallelSummable("R_A + R_B is not positive semidefinite")
    R = parallel_sum_matrix(cA.R, cB.R)
    point = None
    if cA.point is not None and cB.point is not None:
        xa, va = cA.point
        xb, vb = cB.point
        assert np.allclose(xa, xb, atol=1e-10 * (1.0 + np.abs(xa).max())), \
            "summands must be anchored at the same primal point"
        point = (xa, va + vb)
    return SemiCert(cA.M + cB.M, R, point=point)


def cert_parallel_sum(cA: SemiCert, cB: SemiCert) -> SemiCert:
    """Certificate of the parallel sum A # B: (M_A # M_B, R_A + R_B).

    Dual to cert_sum: needs (M_A, M_B) in the parallel-sum domain, image
    anchors must coincide and primal anchors add.
    """
    if cA.M.shape != cB.M.shape:
        raise DimensionMismatch("parallel sum needs operators on the same space")
    if min_eig_sym(cA.M + cB.M) < -1e-10:
        raise NotParallelSummable("M_A + M_B is not positive semidefinite")
    M = parallel_sum_matrix(cA.M, cB.M)
    point = None
    if cA.point is not None and cB.point is not None:
        xa, va = cA.point
        xb, vb = cB.point
        assert np.allclose(va, vb, atol=1e-10 * (1.0 + np.abs(va).max())), \
            "parallel summands must share the image anchor"
        point = (xa + xb, va)
    return SemiCert(M, cA.R + cB.R, point=point)


def _kernel_basis(D: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ker(D) as columns; shape (n, n - rank)."""
    _, svals, Vt = np.linalg.svd(D, full_matrices=True)
    rank = int(np.sum(svals > RANK_TOL * svals[0])) if svals.size else 0
    return Vt[rank:].T


def lmi_solve(D, Y, tol: float = 1e-9) -> np.ndarray:
    """Largest-image solution X* of the LMI D^T X D <= Y.

    D is m x n and Y is n x n symmetric. Feasibility holds iff the kernel
    compression P Y P (P projecting onto ker D) is PSD and
    rank(P Y P) = rank(P Y). The returned X* dominates every solution in
    the sense D^T X D <= D^T X* D <= Y.
    """
    D = np.asarray(D, dtype=float)
    Y = sym(Y)
    m, n = D.shape
    if Y.shape != (n, n):
        raise DimensionMismatch("Y must be square with the column count of D")
    Dp = pinv(D)
    K = _kernel_basis(D)
    P = K @ K.T
    PYP = sym(P @ Y @ P)
    PY = P @ Y
    scale = max(1.0, float(np.abs(Y).max()))
    if min_eig_sym(PYP) < -tol * scale:
        raise Infeasible("kernel compression of Y is not positive semidefinite")
    if matrix_rank(PYP, scale=scale) != matrix_rank(PY, scale=scale):
        raise Infeasible("Y couples ker(D) with its complement (rank condition)")
    # Correct through the compressed kernel block: pinv(I - Dp D @ ...) would
    # invert the projector's rounding noise when ker(D) = {0}.
    YK = Y @ K
    core = Y - YK @ pinv(sym(K.T @ YK)) @ YK.T
    return sym(Dp.T @ core @ Dp)


def lmi_solve_bordered(D, Y) -> np.ndarray:
    """Same X* through the bordered pseudoinverse form (cross-check path)."""
    D = np.asarray(D, dtype=float)
    Y = sym(Y)
    m, n = D.shape
    K = np.block([[-Y, D.T], [D, np.zeros((m, m))]])
    Kp = pinv(K)
    return sym(Kp[n:, n:])


def cert_linear_optimal_R(D, M) -> SemiCert:
    """Best comonotonicity matrix R* for a linear map at fixed M.

    Feasible iff the compression of M onto ker(D) is negative semidefinite
    and rank(P M P) = rank(P (D/2 - M)). R* comes from the bordered
    pseudoinverse of [[M - (D + D^T)/2, D^T], [D, 0]].
    """
    D = np.asarray(D, dtype=float)
    M = sym(M)
    n = D.shape[0]
    if D.shape != (n, n) or M.shape != (n, n):
        raise DimensionMismatch("D and M must be square and same size")
    Dp = pinv(D)
    P = sym(np.eye(n) - Dp @ D)
    PMP = sym(P @ M @ P)
    scale = max(1.0, float(np.abs(M).max()), float(np.abs(D).max()))
    if max_eig_sym(PMP) > 1e-9 * scale:
        raise Infeasible("kernel compression of M is not negative semidefinite")
    if matrix_rank(PMP, scale=scale) != matrix_rank(P @ (0.5 * D - M), scale=scale):
        raise Infeasible("rank condition fails for the requested M")
    K = np.block([[M - 0.5 * (D + D.T), D.T], [D, np.zeros((n, n))]])
    R = sym(pinv(K)[n:, n:])
    return SemiCert(M, R, point=None, subject="linear")


def cert_linear_optimal_R_symmetric(D, M) -> np.ndarray:
    """Alternative R* formula valid when D is symmetric or skew-symmetric."""
    D = np.asarray(D, dtype=float)
    M = sym(M)
    n = D.shape[0]
    Dp = pinv(D)
    K = _kernel_basis(D)
    MK = M @ K
    return sym(
        pinv(sym(D))
        - Dp.T @ M @ Dp
        + Dp.T @ MK @ pinv(sym(K.T @ MK)) @ MK.T @ Dp
    )


def cert_compose_DTD(D, cT: SemiCert) -> SemiCert:
    """Certificate of D T D^T from a certificate (M, Y) of T.

    D is n x m and T acts on R^m. The image modulus of the composition is
    the largest solution of D^T X D <= Y; the primal modulus is D M D^T.
    A pointwise anchor (xt, vt) of T must have xt in range(D^T) and maps
    to ((D^+)^T xt, D vt).
    """
    D = np.asarray(D, dtype=float)
    n, m = D.shape
    if cT.M.shape != (m, m):
        raise DimensionMismatch("certificate dimension must match columns of D")
    X = lmi_solve(D, cT.R)
    point = None
    if cT.point is not None:
        xt, vt = cT.point
        xbar = pinv(D).T @ xt
        if not np.allclose(D.T @ xbar, xt, atol=1e-9 * (1.0 + np.abs(xt).max())):
            raise RangeConditionViolated("anchor is not in the range of D^T")
        point = (xbar, D @ vt)
    return SemiCert(sym(D @ cT.M @ D.T), X, point=point)


def cert_sum_skew(D, M, R, Rprime, point=None) -> SemiCert:
    """Certificate of T + D for (skew-)symmetric linear D.

    T must carry the structured certificate (D^T M D, R + R'), with
    range(R') inside ker(D) and (M, R) parallel summable with PSD sum.
    The sum is then (0, R' + M # R)-semimonotone; an anchor (xb, vb) of T
    becomes (xb, vb + D xb).
    """
    D = np.asarray(D, dtype=float)
    M = sym(M)
    R = sym(R)
    Rprime = sym(Rprime)
    scale = max(1.0, float(np.abs(D).max()))
    skew_gap = min(np.abs(D - D.T).max(initial=0.0), np.abs(D + D.T).max(initial=0.0))
    if skew_gap > 1e-10 * scale:
        raise InvalidModuli("D must be symmetric or skew-symmetric")
    if np.abs(D @ Rprime).max(initial=0.0) > 1e-9 * scale * max(1.0, np.abs(Rprime).max(initial=0.0)):
        raise RangeConditionViolated("range(R') must lie in ker(D)")
    _matrix_dom_box(M, R)
    Rnew = Rprime + parallel_sum_matrix(M, R)
    new_point = None
    if point is not None:
        xb, vb = np.asarray(point[0], dtype=float), np.asarray(point[1], dtype=float)
        new_point = (xb, vb + D @ xb)
    return SemiCert(np.zeros_like(Rnew), Rnew, point=new_point)


def cert_shift_scaled_identity(c: SemiCert, alpha: float, eps: float) -> SemiCert:
    """Certificate of A + alpha I from a scalar-form certificate of A.

    The shift alpha I is (alpha (1 - eps alpha), eps)-semimonotone for any
    eps, so the sum rule with (rho, eps) parallel summable gives moduli
    ((mu + alpha (1 - eps alpha)) I, (rho # eps) I).
    """
    n = c.dim_primal
    mu = float(c.M[0, 0])
    rho = float(c.R[0, 0])
    if not (np.allclose(c.M, mu * np.eye(n)) and np.allclose(c.R, rho * np.eye(n))):
        raise InvalidModuli("shift rule needs a scalar-form certificate")
    if not _scalar_dom_box(rho, eps):
        raise NotParallelSummable(f"(rho, eps) = ({rho}, {eps}) is outside the parallel-sum domain")
    mu_new = mu + alpha * (1.0 - eps * alpha)
    rho_new = parallel_sum_scalar(rho, eps)
    point = None
    if c.point is not None:
        xb, vb = c.point
        point = (xb, vb + alpha * xb)
    return SemiCert(mu_new * np.eye(n), rho_new * np.eye(n), point=point)


def cert_box_normal_cone(l, u, xt, vt) -> SemiCert:
    """Pointwise certificate of the box normal cone at (xt, vt).

    The anchor must be a graph point: xt inside the box, vt zero at
    interior coordinates, nonnegative at upper bounds and nonpositive at
    lower bounds. The modulus is diag(|vt_i| / (u_i - l_i)) with R = 0.
    """
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    xt = np.asarray(xt, dtype=float)
    vt = np.asarray(vt, dtype=float)
    if not (l.shape == u.shape == xt.shape == vt.shape):
        raise DimensionMismatch("box data and anchor must share one shape")
    tol = 1e-12 * (1.0 + np.abs(u - l).max())
    if (xt < l - tol).any() or (xt > u + tol).any():
        raise NotInGraph("anchor point lies outside the box")
    at_lower = np.abs(xt - l) <= tol
    at_upper = np.abs(xt - u) <= tol
    interior = ~at_lower & ~at_upper
    if (np.abs(vt[interior]) > tol).any():
        raise NotInGraph("normal vector must vanish at interior coordinates")
    if (vt[at_lower & ~at_upper] > tol).any() or (vt[at_upper & ~at_lower] < -tol).any():
        raise NotInGraph("normal vector sign pattern does not match the active faces")
    M = np.diag(np.abs(vt) / (u - l))
    return SemiCert(M, np.zeros_like(M), point=(xt, vt))


def cert_slack(cert: SemiCert, x, v, xb, vb) -> float:
    """Certificate inequality slack for one pair of graph points."""
    dx = np.asarray(x, dtype=float) - np.asarray(xb, dtype=float)
    dv = np.asarray(v, dtype=float) - np.asarray(vb, dtype=float)
    return float(dx @ dv - dx @ cert.M @ dx - dv @ cert.R @ dv)


def sampled_cert_check(pairs, cert: SemiCert, base=None) -> float:
    """Smallest certificate slack over sampled graph points.

    For a pointwise certificate every sample is tested against the anchor.
    For a global one all ordered pairs among (up to) the first 60 samples
    are tested, plus consecutive pairs beyond that.
    """
    if base is None:
        base = cert.point
    worst = math.inf
    if base is not None:
        xb, vb = base
        for x, v in pairs:
            worst = min(worst, cert_slack(cert, x, v, xb, vb))
        return worst
    head = pairs[:60]
    for i, (xi, vi) in enumerate(head):
        for j, (xj, vj) in enumerate(head):
            if i != j:
                worst = min(worst, cert_slack(cert, xi, vi, xj, vj))
    for (xa, va), (xb2, vb2) in zip(pairs[60:], pairs[61:]):
        worst = min(worst, cert_slack(cert, xa, va, xb2, vb2))
        worst = min(worst, cert_slack(cert, xb2, vb2, xa, va))
    return worst


def scalar_oblique_params(mod: ScalarModuli, svd: GroupedSvd) -> ObliqueParams:
    """Oblique parameters induced by scalar moduli.

    beta_P = rho_A # rho_B and beta_D = mu_A # mu_B; the primed entries
    are 0 when the matching kernel is empty (full rank) and otherwise the
    raw kernel-side modulus rho_A respectively mu_B.
    """
    beta_P = parallel_sum_scalar(mod.rho_A, mod.rho_B)
    beta_D = parallel_sum_scalar(mod.mu_A, mod.mu_B)
    beta_Pp = 0.0 if svd.full_column_rank else mod.rho_A
    beta_Dp = 0.0 if svd.full_row_rank else mod.mu_B
    return ObliqueParams(beta_P, beta_Pp, beta_D, beta_Dp)


def check_moduli_bounds(mod: ScalarModuli, svd: GroupedSvd) -> bool:
    """Necessary compatibility on each operator's own moduli.

    [mu]_+ [rho]_+ <= 1 / (4 sigma_d^2) must hold separately for A and B
    whenever the structured certificates are attainable on non-singleton
    graphs.
    """
    cap = 1.0 / (4.0 * svd.sigma_min ** 2)
    return (
        pos(mod.mu_A) * pos(mod.rho_A) <= cap + 1e-12
        and pos(mod.mu_B) * pos(mod.rho_B) <= cap + 1e-12
    )


def derive_oblique_params(certA: SemiCert, certB: SemiCert, svd: GroupedSvd) -> ObliqueParams:
    """Project full matrix certificates of A and B onto oblique parameters.

    certA must carry (L^T M_A L, R_A + R_A') and certB (M_B + M_B',
    L R_B L^T). The split is canonicalized: the primed parts are the
    kernel-kernel compressions, the rest stays unprimed. Support of
    certA.M on range(L^T) and of certB.R on range(L) is validated.
    """
    n, m, r = svd.n, svd.m, svd.r
    if certA.M.shape != (n, n):
        raise DimensionMismatch("certificate of A must act on the primal space")
    if certB.M.shape != (m, m):
        raise DimensionMismatch("certificate of B must act on the dual space")
    L = svd.reconstruct()
    Lp = pinv(L)

    M_A = sym(Lp.T @ certA.M @ Lp)
    back = sym(L.T @ M_A @ L)
    if not np.allclose(back, certA.M, atol=1e-8 * (1.0 + np.abs(certA.M).max())):
        raise RangeConditionViolated("M part of A's certificate is not L^T M_A L for any M_A")

    P_ker = svd.proj_ker_L
    R_Ap = sym(P_ker @ certA.R @ P_ker)
    R_A = sym(certA.R - R_Ap)

    P_kert = svd.proj_ker_Lt
    M_Bp = sym(P_kert @ certB.M @ P_kert)
    M_B = sym(certB.M - M_Bp)

    R_B = sym(Lp @ certB.R @ Lp.T)
    back = sym(L @ R_B @ L.T)
    if not np.allclose(back, certB.R, atol=1e-8 * (1.0 + np.abs(certB.R).max())):
        raise RangeConditionViolated("R part of B's certificate is not L R_B L^T for any R_B")

    _matrix_dom_box(M_A, M_B)
    _matrix_dom_box(R_A, R_B)

    X, Y, Xp, Yp = svd.X, svd.Y, svd.Xp, svd.Yp
    beta_P = min_eig_sym(X.T @ parallel_sum_matrix(R_A, R_B) @ X)
    beta_D = min_eig_sym(Y.T @ parallel_sum_matrix(M_A, M_B) @ Y)
    beta_Pp = math.inf if Xp.shape[1] == 0 else min_eig_sym(Xp.T @ R_Ap @ Xp)
    beta_Dp = math.inf if Yp.shape[1] == 0 else min_eig_sym(Yp.T @ M_Bp @ Yp)
    return ObliqueParams(beta_P, beta_Pp, beta_D, beta_Dp)


def induced_matrix_certs(mod: ScalarModuli, L) -> tuple[SemiCert, SemiCert]:
    """Matrix certificates that the scalar moduli stand for."""
    L = np.asarray(L, dtype=float)
    m, n = L.shape
    certA = SemiCert(mod.mu_A * (L.T @ L), mod.rho_A * np.eye(n), subject="A")
    certB = SemiCert(mod.mu_B * np.eye(m), mod.rho_B * (L @ L.T), subject="B")
    return certA, certB


def build_V(params: ObliqueParams, svd: GroupedSvd) -> np.ndarray:
    """Oblique metric V on the primal-dual space defined by the parameters."""
    def weighted(beta, proj_main, beta_p, proj_ker, empty_kernel):
        out = beta * proj_main
        if not empty_kernel:
            if math.isinf(beta_p):
                raise ValueError("infinite kernel weight with a nonempty kernel")
            out = out + beta_p * proj_ker
        return out

    Vp = weighted(params.beta_P, svd.proj_range_Lt, params.beta_Pp,
                  svd.proj_ker_L, svd.full_column_rank)
    Vd = weighted(params.beta_D, svd.proj_range_L, params.beta_Dp,
                  svd.proj_ker_Lt, svd.full_row_rank)
    return block_diag(Vp, Vd)
