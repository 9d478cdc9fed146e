"""Operator oracles with closed-form resolvents.

Two concrete operator families are provided: affine maps x -> D x + q and
normal cones of boxes. Each exposes a resolvent oracle for itself and for
its inverse, which is all the solver ever touches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class SingularResolvent(Exception):
    """The resolvent system matrix is numerically singular."""


class NotLinear(Exception):
    """A matrix form was requested from a non-affine operator."""


class DimensionMismatch(Exception):
    """Operand shapes are incompatible."""


@dataclass(frozen=True, eq=False)
class ResolventOracle:
    """Evaluator (s, w) -> J_{sT}(w) for one operator T.

    continuous / full_domain describe the oracle itself; both hold for the
    families built here.
    """

    dim: int
    step: Callable[[float, np.ndarray], np.ndarray]
    continuous: bool = True
    full_domain: bool = True

    def __call__(self, s: float, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise DimensionMismatch(f"expected shape ({self.dim},), got {w.shape}")
        return self.step(float(s), w)


def _check_conditioning(G: np.ndarray, what: str) -> None:
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularResolvent(f"{what} is numerically singular")


def resolvent_affine(D, q, s: float, w) -> np.ndarray:
    """J_{sA}(w) for the affine operator A x = D x + q.

    Solves (I + s D) z = w - s q directly.
    """
    D = np.asarray(D, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    G = np.eye(D.shape[0]) + s * D
    _check_conditioning(G, f"I + {s} * D")
    return np.linalg.solve(G, w - s * q)


def resolvent_affine_inverse(D, q, s: float, w) -> np.ndarray:
    """J_{s A^{-1}}(w) for affine A x = D x + q, without inverting D.

    z = J_{sA^{-1}}(w) satisfies z = A((w - z)/s), i.e.
    (s I + D) z = D w + s q.
    """
    D = np.asarray(D, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    G = s * np.eye(D.shape[0]) + D
    _check_conditioning(G, f"{s} * I + D")
    return np.linalg.solve(G, D @ w + s * q)


def resolvent_box_inverse(l, u, tau: float, y) -> np.ndarray:
    """J_{tau B^{-1}}(y) for B the normal cone of the box [l, u].

    Via the Moreau identity: y - tau * proj_box(y / tau).
    """
    y = np.asarray(y, dtype=float)
    return y - tau * np.clip(y / tau, l, u)


class AffineOp:
    """The single-valued affine operator x -> D x + q."""

    def __init__(self, D, q=None):
        self.D = np.asarray(D, dtype=float)
        if self.D.ndim != 2 or self.D.shape[0] != self.D.shape[1]:
            raise DimensionMismatch("affine operator needs a square matrix")
        n = self.D.shape[0]
        self.q = np.zeros(n) if q is None else np.asarray(q, dtype=float)
        if self.q.shape != (n,):
            raise DimensionMismatch("offset length does not match the matrix")

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    def __call__(self, x) -> np.ndarray:
        return self.D @ np.asarray(x, dtype=float) + self.q

    def resolvent(self, s: float, w) -> np.ndarray:
        return resolvent_affine(self.D, self.q, s, w)

    def inverse_resolvent(self, s: float, w) -> np.ndarray:
        return resolvent_affine_inverse(self.D, self.q, s, w)

    def oracle(self) -> ResolventOracle:
        return ResolventOracle(self.dim, self.resolvent)

    def inverse_oracle(self) -> ResolventOracle:
        return ResolventOracle(self.dim, self.inverse_resolvent)


class BoxNormalCone:
    """Normal cone operator of the box {x : l <= x <= u} (set-valued)."""

    def __init__(self, l, u):
        self.l = np.asarray(l, dtype=float)
        self.u = np.asarray(u, dtype=float)
        if self.l.shape != self.u.shape or self.l.ndim != 1:
            raise DimensionMismatch("box bounds must be 1d and same length")
        assert (self.l < self.u).all(), "box must have nonempty interior"

    @property
    def dim(self) -> int:
        return self.l.shape[0]

    def project(self, w) -> np.ndarray:
        return np.clip(np.asarray(w, dtype=float), self.l, self.u)

    def resolvent(self, s: float, w) -> np.ndarray:
        # the resolvent of a normal cone is the projection, for any s > 0
        return self.project(w)

    def inverse_resolvent(self, s: float, w) -> np.ndarray:
        return resolvent_box_inverse(self.l, self.u, s, w)

    def oracle(self) -> ResolventOracle:
        return ResolventOracle(self.dim, self.resolvent)

    def inverse_oracle(self) -> ResolventOracle:
        return ResolventOracle(self.dim, self.inverse_resolvent)


def affine_inverse(op: AffineOp) -> AffineOp:
    """Matrix form of A^{-1} for invertible affine A."""
    s = np.linalg.svd(op.D, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], np.finfo(float).tiny):
        raise NotLinear("the operator matrix is singular; no affine inverse")
    Dinv = np.linalg.solve(op.D, np.eye(op.dim))
    return AffineOp(Dinv, -Dinv @ op.q)


def pd_matrix(problem) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and offset of the primal-dual operator (x,y) -> (Ax + L^T y, B^{-1}y - Lx).

    Needs affine A and affine invertible B; raises NotLinear otherwise.
    """
    A, B, L = problem.A, problem.B, problem.L
    if not isinstance(A, AffineOp) or not isinstance(B, AffineOp):
        raise NotLinear("primal-dual matrix form needs affine A and B")
    Binv = affine_inverse(B)
    n, m = A.dim, B.dim
    T = np.block([[A.D, L.T], [-L, Binv.D]])
    t = np.concatenate([A.q, Binv.q])
    return T, t


def apply_pd_operator(problem, z) -> np.ndarray:
    """Evaluate the primal-dual operator at z = (x, y) in matrix form."""
    T, t = pd_matrix(problem)
    z = np.asarray(z, dtype=float)
    if z.shape != (T.shape[0],):
        raise DimensionMismatch(f"expected z of length {T.shape[0]}")
    return T @ z + t


def sample_graph(op, count: int, rng: np.random.Generator, scale: float = 3.0):
    """Draw (x, v) pairs from the graph of op.

    Affine operators are sampled at gaussian points. For a box normal cone
    each coordinate independently sits at the lower face, upper face or in
    the interior, with the matching sign pattern for v.
    """
    pts = []
    if isinstance(op, AffineOp):
        for _ in range(count):
            x = scale * rng.standard_normal(op.dim)
            pts.append((x, op(x)))
        return pts
    if isinstance(op, BoxNormalCone):
        l, u = op.l, op.u
        for _ in range(count):
            mode = rng.integers(0, 3, size=op.dim)
            t = rng.uniform(size=op.dim)
            x = np.where(mode == 0, l, np.where(mode == 1, u, l + t * (u - l)))
            mag = scale * np.abs(rng.standard_normal(op.dim))
            v = np.where(mode == 0, -mag, np.where(mode == 1, mag, 0.0))
            pts.append((x, v))
        return pts
    raise NotLinear(f"no graph sampler for {type(op).__name__}")
