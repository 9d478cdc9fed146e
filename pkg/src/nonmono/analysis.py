"""Spectral side checks for linear instances.

For affine A and B the relaxed iteration is linear: z^{k+1} = H(lam) z^k
plus a constant, with

    H(lam) = I + lam ((M + T)^{-1} M - I)

where T is the primal-dual operator matrix and M the preconditioner.
Stability of the meaningful component is governed by the spectral radius
of P H(lam) P with P the orthogonal projector onto range(M); the largest
stable relaxation is located by bisection on that radius. These routines
exist to check the stepsize windows against ground truth, not to solve
anything.
"""

from __future__ import annotations

import numpy as np

from .numlin import matrix_rank, min_eig_sym, spectral_radius, sym
from .ops import pd_matrix
from .solver import PdProblem, assemble_preconditioner

BISECT_TOL = 1e-6
BRACKET_START = 8.0
BRACKET_CAP = 2.0 ** 30
GRID = 512


class NoStableLambda(Exception):
    """No positive relaxation keeps the iteration stable."""


class SingularOperator(Exception):
    """A matrix that must be inverted for this analysis is singular."""


def algo_operator(problem: PdProblem, gamma: float, tau: float, lam: float) -> np.ndarray:
    """The linear update matrix H(lam) of the relaxed iteration."""
    T, _ = pd_matrix(problem)
    M, _ = assemble_preconditioner(problem.L, problem.svd, gamma, tau)
    G = M + T
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularOperator("M + T is numerically singular")
    S = np.linalg.solve(G, M)
    d = S.shape[0]
    return np.eye(d) + lam * (S - np.eye(d))


def _radius_fn(problem: PdProblem, gamma: float, tau: float, projected: bool):
    T, _ = pd_matrix(problem)
    M, U = assemble_preconditioner(problem.L, problem.svd, gamma, tau)
    G = M + T
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise SingularOperator("M + T is numerically singular")
    S = np.linalg.solve(G, M)
    d = S.shape[0]
    eye = np.eye(d)
    P = U @ U.T if projected else None

    def rho(lam: float) -> float:
        H = eye + lam * (S - eye)
        if P is not None:
            H = P @ H @ P
        return spectral_radius(H)

    return rho


def tight_lambda(problem: PdProblem, gamma: float, tau: float,
                 projected: bool = False, tol: float = BISECT_TOL) -> float:
    """Largest relaxation with spectral radius below one, by bisection.

    Scans (0, hi] on a coarse grid for the first instability, then bisects
    the crossing to tol. The bracket starts at 8 and doubles while the
    iteration is still stable at its end; math.inf is returned if it stays
    stable past a huge cap. NoStableLambda means unstable already at 0+.
    """
    rho = _radius_fn(problem, gamma, tau, projected)
    lo = 1e-8
    if rho(lo) >= 1.0:
        raise NoStableLambda(f"spectral radius {rho(lo):.6f} >= 1 at lambda -> 0+")
    hi = BRACKET_START
    while rho(hi) < 1.0:
        hi *= 2.0
        if hi > BRACKET_CAP:
            return float("inf")
    # first grid point that is unstable, nearest the origin
    grid = np.linspace(lo, hi, GRID + 1)
    unstable = None
    for lam in grid[1:]:
        if rho(lam) >= 1.0:
            unstable = lam
            break
        lo = lam
    assert unstable is not None  # rho(hi) >= 1 guarantees a crossing
    a, b = lo, unstable
    while b - a > tol:
        mid = 0.5 * (a + b)
        if rho(mid) < 1.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def verify_weak_minty_linear(T, V, restrict: bool = False, M=None) -> float:
    """Smallest eigenvalue of the comonotonicity form of a linear operator.

    For z* = 0 the inequality <T z, z - z*> >= <T z, V T z> for all z is
    the matrix inequality sym(T) - T^T V T >= 0; the returned slack is its
    minimum eigenvalue. With restrict=True the form is tested only on
    T^{-1} range(M), the directions the iteration actually visits.
    """
    T = np.asarray(T, dtype=float)
    V = np.asarray(V, dtype=float)
    W = sym(0.5 * (T + T.T) - T.T @ V @ T)
    if not restrict:
        return min_eig_sym(W)
    if M is None:
        raise ValueError("restrict=True needs the preconditioner M")
    M = np.asarray(M, dtype=float)
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise SingularOperator("T is singular; cannot restrict to T^{-1} range(M)")
    Um, sm, _ = np.linalg.svd(M)
    r = matrix_rank(M)
    if r == 0:
        raise SingularOperator("M has no range to restrict to")
    B = np.linalg.solve(T, Um[:, :r])
    Q, _ = np.linalg.qr(B)
    return min_eig_sym(Q.T @ W @ Q)


def trace_negativity_probe(T_P, T_D, T_PD) -> tuple[float, float, float]:
    """Traces of the three monotonicity-gap matrices.

    A negative trace certifies that no amount of shifting makes the
    corresponding form monotone on average; used to show an instance sits
    strictly outside the classical regime.
    """
    return (
        float(np.trace(np.asarray(T_P, dtype=float))),
        float(np.trace(np.asarray(T_D, dtype=float))),
        float(np.trace(np.asarray(T_PD, dtype=float))),
    )
