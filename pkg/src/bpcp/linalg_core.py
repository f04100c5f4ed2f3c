"""Dense matrix helpers shared by the solver, the device and the certificate lab.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and shape
``(N, T)``. :func:`as_matrix` is the single validation gate.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg


class SvdConvergenceError(np.linalg.LinAlgError):
    """Raised when no SVD driver converged.

    ``attempts`` counts the LAPACK drivers that were tried before giving up.
    """

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} driver attempts)")
        self.attempts = attempts


class SvdFactors(NamedTuple):
    """Economy SVD ``a = u @ diag(sigma) @ v.T`` with ``sigma`` descending."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array, raising ``ValueError`` otherwise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return np.ascontiguousarray(arr)


def svd(a) -> SvdFactors:
    """Economy SVD with ``k = min(N, T)``.

    Uses LAPACK ``gesdd`` and falls back to the slower but more robust
    ``gesvd`` driver. Singular values are returned as computed, never clamped.
    """
    a = as_matrix(a)
    attempts = 0
    for driver in ("gesdd", "gesvd"):
        attempts += 1
        try:
            u, s, vt = scipy.linalg.svd(
                a, full_matrices=False, lapack_driver=driver, check_finite=False
            )
        except np.linalg.LinAlgError:
            continue
        return SvdFactors(u, s, vt.T)
    raise SvdConvergenceError("SVD did not converge", attempts)


def svd_skinny(a, max_cond: float = 1e6) -> SvdFactors:
    """Economy SVD of a tall or wide matrix through Cholesky-QR2.

    Two Cholesky-QR passes orthonormalize the long side, then the small
    ``k x k`` triangular factor is decomposed directly. This is several times
    faster than ``gesdd`` when one side is much longer than the other. When
    the Gram matrix is not safely positive definite (condition estimate above
    ``max_cond``) the call falls back to :func:`svd`.
    """
    a = as_matrix(a)
    if a.shape[0] < a.shape[1]:
        u, s, v = svd_skinny(a.T, max_cond)
        return SvdFactors(v, s, u)
    k = a.shape[1]
    eye = np.eye(k)
    try:
        r1 = scipy.linalg.cholesky(a.T @ a, check_finite=False)
        if not np.linalg.cond(r1) <= max_cond:
            return svd(a)
        q = a @ scipy.linalg.solve_triangular(r1, eye, check_finite=False)
        r2 = scipy.linalg.cholesky(q.T @ q, check_finite=False)
        q = q @ scipy.linalg.solve_triangular(r2, eye, check_finite=False)
    except np.linalg.LinAlgError:
        return svd(a)
    ub, s, vt = scipy.linalg.svd(r2 @ r1, check_finite=False)
    return SvdFactors(q @ ub, s, vt.T)


def norm_nuclear(a) -> float:
    return float(np.sum(svd(a).sigma))


def norm_l1(a) -> float:
    return float(np.sum(np.abs(as_matrix(a))))


def norm_fro(a) -> float:
    return float(np.linalg.norm(as_matrix(a), "fro"))


def norm_inf(a) -> float:
    """Max norm: largest absolute entry."""
    return float(np.max(np.abs(as_matrix(a))))


def norm_op(a) -> float:
    """Operator (spectral) norm, the largest singular value."""
    return float(svd(a).sigma[0])


def hadamard(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b
