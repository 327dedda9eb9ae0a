"""Dense-matrix primitives: norms, SVD-based projections, proximal operators, supports.

Matrices are plain 2-D float ``numpy`` arrays. Vectorization of an m x n matrix
is row-major (``ravel``) everywhere in the package.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from src.constants import DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL
from src.errors import ValidationError

logger = logging.getLogger(__name__)

Matrix = np.ndarray

NORM_KINDS = ("nuclear", "spectral", "inf_entry", "one_entry", "mi", "frobenius")


def check_finite(A, name: str = "matrix") -> Matrix:
    """Return ``A`` as a 2-D float array, rejecting empty shapes and NaN/Inf."""
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValidationError(f"{name} has a non-finite entry at ({bad[0]}, {bad[1]})")
    return arr


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Reduced SVD ``U diag(singular_values) V^T`` with k retained values."""

    U: Matrix
    singular_values: np.ndarray
    V: Matrix

    def __post_init__(self):
        k = len(self.singular_values)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != k or self.V.shape[1] != k:
            raise ValidationError(
                f"inconsistent SVD factor shapes: U {self.U.shape}, "
                f"sigma ({k},), V {self.V.shape}"
            )

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    @property
    def sign_matrix(self) -> Matrix:
        """U V^T, the nuclear-norm subgradient direction inside T."""
        return self.U @ self.V.T

    def reconstruct(self) -> Matrix:
        return (self.U * self.singular_values) @ self.V.T

    def is_orthonormal(self, tol: float = 1e-10) -> bool:
        k = self.rank
        eye = np.eye(k)
        return bool(
            np.max(np.abs(self.U.T @ self.U - eye), initial=0.0) <= tol
            and np.max(np.abs(self.V.T @ self.V - eye), initial=0.0) <= tol
        )

    @classmethod
    def empty(cls, m: int, n: int) -> "SvdFactors":
        """Factors of the m x n zero matrix (rank 0)."""
        return cls(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Boolean support pattern of a p x n matrix."""

    mask: np.ndarray

    def __post_init__(self):
        if self.mask.ndim != 2 or self.mask.dtype != bool:
            raise ValidationError("support mask must be a 2-D boolean array")

    @property
    def rows(self) -> int:
        return self.mask.shape[0]

    @property
    def cols(self) -> int:
        return self.mask.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def cardinality(self) -> int:
        return int(np.count_nonzero(self.mask))

    def indices(self) -> np.ndarray:
        """(i, j) pairs in row-major order, shape (|Omega|, 2)."""
        return np.argwhere(self.mask)

    @classmethod
    def from_indices(cls, rows: int, cols: int, entries) -> "SupportSet":
        mask = np.zeros((rows, cols), dtype=bool)
        for i, j in entries:
            mask[i, j] = True
        return cls(mask)


class DegreeStats(NamedTuple):
    d_r: int
    d_c: int
    d: int


def support_of(S: Matrix, zero_tol: float = DEFAULT_ZERO_TOL) -> SupportSet:
    return SupportSet(np.abs(np.asarray(S, dtype=float)) > zero_tol)


def reduced_svd(A: Matrix, rank_tol: float = DEFAULT_RANK_TOL) -> SvdFactors:
    """Reduced SVD keeping singular values above ``rank_tol * sigma_max``."""
    A = check_finite(A)
    m, n = A.shape
    U, s, Vt = scipy.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return SvdFactors.empty(m, n)
    keep = s > rank_tol * s[0]
    return SvdFactors(U[:, keep], s[keep], Vt[keep].T)


def norm(A: Matrix, kind: str) -> float:
    if kind not in NORM_KINDS:
        raise ValidationError(f"unknown norm kind {kind!r}; expected one of {', '.join(NORM_KINDS)}")
    A = check_finite(A)
    if kind == "nuclear":
        return float(np.sum(scipy.linalg.svdvals(A)))
    if kind == "spectral":
        return float(scipy.linalg.svdvals(A)[0])
    if kind == "inf_entry":
        return float(np.max(np.abs(A)))
    if kind == "one_entry":
        return float(np.sum(np.abs(A)))
    if kind == "mi":
        return float(np.max(np.sum(np.abs(A), axis=1)))
    return float(np.sqrt(np.sum(A * A)))


def soft_threshold(A: Matrix, tau: float) -> Matrix:
    """Entrywise shrinkage, the proximal operator of ``tau * ||.||_1``."""
    if tau < 0:
        raise ValidationError(f"threshold must be nonnegative, got {tau}")
    A = np.asarray(A, dtype=float)
    return np.sign(A) * np.maximum(np.abs(A) - tau, 0.0)


def shrink_singular_values(A: Matrix, tau: float) -> tuple[Matrix, int]:
    """SVT plus the rank of the result."""
    if tau < 0:
        raise ValidationError(f"threshold must be nonnegative, got {tau}")
    U, s, Vt = scipy.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    shrunk = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(shrunk))
    return (U[:, :k] * shrunk[:k]) @ Vt[:k], k


def singular_value_threshold(A: Matrix, tau: float) -> Matrix:
    """Proximal operator of ``tau * ||.||_*``: U max(Sigma - tau, 0) V^T."""
    return shrink_singular_values(A, tau)[0]


def _check_tangent_shape(factors: SvdFactors, X: Matrix):
    if X.shape != factors.shape:
        raise ValidationError(f"matrix shape {X.shape} does not match factors {factors.shape}")


def tangent_project(factors: SvdFactors, X: Matrix, complement: bool = False) -> Matrix:
    """Project onto T(L) = {U A^T + B V^T}, or onto its orthogonal complement."""
    X = np.asarray(X, dtype=float)
    _check_tangent_shape(factors, X)
    U, V = factors.U, factors.V
    left = X - U @ (U.T @ X)
    perp = left - (left @ V) @ V.T
    if complement:
        return perp
    return X - perp


def support_project(X: Matrix, omega: SupportSet, complement: bool = False) -> Matrix:
    X = np.asarray(X, dtype=float)
    if X.shape != omega.shape:
        raise ValidationError(f"matrix shape {X.shape} does not match support {omega.shape}")
    keep = ~omega.mask if complement else omega.mask
    return np.where(keep, X, 0.0)


def pseudoinverse(H: Matrix, rank_tol: float = DEFAULT_RANK_TOL) -> Matrix:
    factors = reduced_svd(H, rank_tol)
    return (factors.V / factors.singular_values) @ factors.U.T


def degree_stats(S: Matrix, zero_tol: float = DEFAULT_ZERO_TOL) -> DegreeStats:
    """Largest nonzero count per row (d_r), per column (d_c) and their max (d)."""
    if zero_tol < 0:
        raise ValidationError(f"zero_tol must be nonnegative, got {zero_tol}")
    nz = np.abs(np.asarray(S, dtype=float)) > zero_tol
    d_r = int(nz.sum(axis=1).max(initial=0))
    d_c = int(nz.sum(axis=0).max(initial=0))
    return DegreeStats(d_r, d_c, max(d_r, d_c))


def tangent_basis(factors: SvdFactors) -> Matrix:
    """Orthonormal basis of vec(T) as columns, shape (m*n, r*(m+n-r))."""
    m, n = factors.shape
    r = factors.rank
    if r == 0:
        return np.zeros((m * n, 0))
    # vec(U[:, k] e_j^T) and vec(e_i V[:, k]^T) under row-major vec
    generators = np.hstack([np.kron(factors.U, np.eye(n)), np.kron(np.eye(m), factors.V)])
    basis = scipy.linalg.orth(generators, rcond=1e-10)
    expected = r * (m + n - r)
    if basis.shape[1] != expected:
        raise ValidationError(
            f"tangent basis has dimension {basis.shape[1]}, expected r(m+n-r) = {expected}"
        )
    return basis


def support_image_basis(G: Matrix, omega: SupportSet) -> Matrix:
    """Columns vec(G E_ij) for (i, j) in omega: the m x n matrix with column j = g_i."""
    m = G.shape[0]
    p, n = omega.shape
    if G.shape[1] != p:
        raise ValidationError(f"mask has {G.shape[1]} columns but support has {p} rows")
    idx = omega.indices()
    out = np.zeros((m * n, len(idx)))
    rows = np.arange(m) * n
    for col, (i, j) in enumerate(idx):
        out[rows + j, col] = G[:, i]
    return out
