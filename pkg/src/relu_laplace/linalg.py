"""Dense linear algebra shared by the fitting, prediction and theory code.

Thin, checked wrappers around LAPACK (via numpy): every SPD routine symmetrises
its input first and raises :class:`NotPositiveDefinite` instead of returning
NaNs, so a corrupted covariance is caught where it is used.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import AsymmetricMatrix, DimensionMismatch, NoConvergence, NotPositiveDefinite

SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True)
class SymmetricEigen:
    """Eigenvalues in descending order and the matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def max(self):
        return float(self.values[0])

    @property
    def min(self):
        return float(self.values[-1])


def symmetrize(A, rtol=SYMMETRY_RTOL):
    """Return (A + A^T)/2, refusing matrices that are visibly asymmetric."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.abs(A).max(initial=0.0), 1e-300)
    if np.abs(A - A.T).max(initial=0.0) > rtol * scale:
        raise AsymmetricMatrix("matrix is not symmetric")
    return 0.5 * (A + A.T)


def cholesky(A):
    """Lower-triangular L with L @ L.T == A."""
    A = symmetrize(A)
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def sym_eig(A):
    A = symmetrize(A)
    try:
        values, vectors = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from None
    return SymmetricEigen(values[::-1].copy(), vectors[:, ::-1].copy())


def eigvalsh_desc(A):
    """Eigenvalues only, sorted descending."""
    A = symmetrize(A)
    try:
        return np.linalg.eigvalsh(A)[::-1].copy()
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from None


def min_singular_value(A):
    """Smallest singular value sqrt(lambda_min(A^T A)); zero when A is wide."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if m < n:
        return 0.0
    s = np.linalg.svd(A, compute_uv=False)
    return float(s.min()) if s.size else 0.0


def kron(A, B):
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def quad_form(v, A):
    """v^T A v, evaluated as a symmetric contraction."""
    v = np.asarray(v, dtype=float)
    A = np.asarray(A, dtype=float)
    if A.shape != (v.shape[-1], v.shape[-1]):
        raise DimensionMismatch(f"vector of length {v.shape[-1]} vs matrix {A.shape}")
    return np.einsum("...i,ij,...j->...", v, 0.5 * (A + A.T), v)


def solve_spd(A, b):
    L = cholesky(A)
    b = np.asarray(b, dtype=float)
    y = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, y, lower=False, check_finite=False)


def spd_inverse(A):
    """Inverse of an SPD matrix, returned exactly symmetric."""
    A = np.asarray(A, dtype=float)
    inv = solve_spd(A, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)

