"""Dense linear algebra helpers shared across the package.

Everything here is desk scale: dense direct factorizations only. Symmetric
matrices are plain numpy arrays kept exactly symmetric through :func:`sym`.
Rank decisions are relative, scaled by the largest singular value involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-10   # relative rank cutoff
GROUP_TOL = 1e-8   # relative tolerance for merging near-equal singular values


class ZeroMatrix(Exception):
    """The operation needs a nonzero matrix."""


class NotParallelSummable(Exception):
    """The pair fails the parallel-sum range (or scalar denominator) condition."""


def sym(S) -> np.ndarray:
    """Return the symmetric part (S + S.T)/2, exactly symmetric entrywise."""
    S = np.asarray(S, dtype=float)
    assert S.ndim == 2 and S.shape[0] == S.shape[1]
    return 0.5 * (S + S.T)


def matrix_rank(A, scale: float | None = None, rank_tol: float = RANK_TOL) -> int:
    """Rank with an absolute cutoff rank_tol * scale.

    When scale is omitted it defaults to the largest singular value of A
    itself, matching numpy's notion of relative rank.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if scale is None:
        scale = s[0]
    return int(np.sum(s > rank_tol * max(scale, np.finfo(float).tiny)))


@dataclass(frozen=True, eq=False)
class GroupedSvd:
    """SVD of L with coinciding singular values merged into blocks.

    sigma holds the d distinct positive singular values in strictly
    descending order and mult the matching multiplicities. Columns of X / Y
    are the right / left singular vectors in the same block order, so
    L @ X = Y * sigma(repeated). Xp spans ker(L) and Yp spans ker(L.T);
    either may have zero width.
    """

    sigma: np.ndarray
    mult: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Xp: np.ndarray
    Yp: np.ndarray

    @property
    def d(self) -> int:
        return len(self.sigma)

    @property
    def r(self) -> int:
        return int(self.mult.sum())

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[0]

    @property
    def norm(self) -> float:
        """Operator norm of L, i.e. the largest singular value."""
        return float(self.sigma[0])

    @property
    def sigma_min(self) -> float:
        """Smallest positive singular value (sigma_d)."""
        return float(self.sigma[-1])

    @property
    def full_column_rank(self) -> bool:
        return self.r == self.n

    @property
    def full_row_rank(self) -> bool:
        return self.r == self.m

    def block(self, i: int) -> tuple[float, np.ndarray, np.ndarray]:
        """Return (sigma_i, X_i, Y_i) for the i-th multiplicity block."""
        j = int(self.mult[:i].sum())
        w = int(self.mult[i])
        return float(self.sigma[i]), self.X[:, j:j + w], self.Y[:, j:j + w]

    def sigma_full(self) -> np.ndarray:
        """Length-r vector of singular values with multiplicities expanded."""
        return np.repeat(self.sigma, self.mult)

    def reconstruct(self) -> np.ndarray:
        return (self.Y * self.sigma_full()) @ self.X.T

    # orthogonal projections onto the four fundamental subspaces
    @property
    def proj_range_Lt(self) -> np.ndarray:
        return self.X @ self.X.T

    @property
    def proj_ker_L(self) -> np.ndarray:
        if self.Xp.shape[1] == 0:
            return np.zeros((self.n, self.n))
        return self.Xp @ self.Xp.T

    @property
    def proj_range_L(self) -> np.ndarray:
        return self.Y @ self.Y.T

    @property
    def proj_ker_Lt(self) -> np.ndarray:
        if self.Yp.shape[1] == 0:
            return np.zeros((self.m, self.m))
        return self.Yp @ self.Yp.T


def grouped_svd(L, group_tol: float = GROUP_TOL, rank_tol: float = RANK_TOL) -> GroupedSvd:
    """Compute the multiplicity-grouped SVD of a nonzero matrix L.

    Singular values within group_tol * sigma_max of the group head are
    merged and replaced by their mean; values below rank_tol * sigma_max
    count as zero and their directions land in the kernel bases.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2:
        raise ValueError("grouped_svd expects a 2d array")
    if not np.any(L):
        raise ZeroMatrix("grouped_svd needs a nonzero matrix")
    m, n = L.shape
    U, s, Vt = np.linalg.svd(L)
    V = Vt.T
    smax = s[0]
    r = int(np.sum(s > rank_tol * smax))

    sigma, mult = [], []
    i = 0
    while i < r:
        j = i
        while j + 1 < r and s[i] - s[j + 1] <= group_tol * smax:
            j += 1
        sigma.append(float(np.mean(s[i:j + 1])))
        mult.append(j + 1 - i)
        i = j + 1

    return GroupedSvd(
        sigma=np.array(sigma),
        mult=np.array(mult, dtype=int),
        X=V[:, :r].copy(),
        Y=U[:, :r].copy(),
        Xp=V[:, r:].copy(),
        Yp=U[:, r:].copy(),
    )


def pinv(A, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with the package's relative rank cutoff."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]))
    if not np.any(A):
        return np.zeros((A.shape[1], A.shape[0]))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cut = rank_tol * s[0]
    inv = np.where(s > cut, 1.0 / np.where(s > cut, s, 1.0), 0.0)
    return (Vt.T * inv) @ U.T


def parallel_sum_scalar(a: float, b: float) -> float:
    """Scalar parallel sum a # b = ab/(a+b), with 0 # 0 = 0 and a # inf = a."""
    a = float(a)
    b = float(b)
    if math.isinf(a) and math.isinf(b):
        if a > 0 and b > 0:
            return math.inf
        raise NotParallelSummable("parallel sum of opposite infinities")
    if math.isinf(a):
        return b
    if math.isinf(b):
        return a
    if a == 0.0 and b == 0.0:
        return 0.0
    if a + b == 0.0:
        raise NotParallelSummable(f"{a} and {b} are not parallel summable (zero sum)")
    return a * b / (a + b)


def scalar_summable(a: float, b: float) -> bool:
    """True when the scalar parallel sum a # b is defined."""
    try:
        parallel_sum_scalar(a, b)
    except NotParallelSummable:
        return False
    return True


def parallel_sum_matrix(A, B, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Matrix parallel sum A # B = A (A+B)^+ B for symmetric A, B.

    Raises NotParallelSummable unless range(A) lies in range(A+B) and
    range(A.T) in range((A+B).T); both are rank tests at rank_tol scaled by
    the largest singular value of the stacked comparison matrix.
    """
    A = sym(A)
    B = sym(B)
    if A.shape != B.shape:
        raise ValueError("parallel_sum_matrix needs same-shape matrices")
    S = A + B
    if not np.any(A) and not np.any(B):
        return np.zeros_like(S)
    stacked = np.vstack([A, S])
    scale = float(np.linalg.svd(stacked, compute_uv=False)[0])
    r_s = matrix_rank(S, scale=scale, rank_tol=rank_tol)
    if matrix_rank(stacked, scale=scale, rank_tol=rank_tol) != r_s:
        raise NotParallelSummable("range(A) is not contained in range(A+B)")
    if matrix_rank(np.hstack([A, S]), scale=scale, rank_tol=rank_tol) != r_s:
        raise NotParallelSummable("range(A.T) is not contained in range((A+B).T)")
    return sym(A @ pinv(S, rank_tol=rank_tol) @ B)


def matrix_summable(A, B, rank_tol: float = RANK_TOL) -> bool:
    try:
        parallel_sum_matrix(A, B, rank_tol=rank_tol)
    except NotParallelSummable:
        return False
    return True


def min_eig_sym(S) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    S = sym(S)
    if S.shape[0] == 0:
        raise ValueError("min_eig_sym of an empty matrix")
    return float(np.linalg.eigvalsh(S)[0])


def max_eig_sym(S) -> float:
    S = sym(S)
    if S.shape[0] == 0:
        raise ValueError("max_eig_sym of an empty matrix")
    return float(np.linalg.eigvalsh(S)[-1])


def spectral_radius(H) -> float:
    """Largest eigenvalue modulus of a (possibly nonsymmetric) square matrix."""
    H = np.asarray(H, dtype=float)
    assert H.ndim == 2 and H.shape[0] == H.shape[1]
    if H.shape[0] == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(H)).max())
