"""SVD-based least-squares machinery: thin SVD, numeric rank, pseudoinverse."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg


class NumericalError(ArithmeticError):
    """Raised when a numerical routine fails (non-convergence, divergence)."""


class SvdResult(NamedTuple):
    """Thin SVD ``A = U @ diag(S) @ V.T`` with S non-increasing."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {A.shape}")
    return A


def thin_svd(A) -> SvdResult:
    """Thin SVD of an m x n matrix via LAPACK.

    Uses the divide-and-conquer driver and retries with the QR-iteration
    driver if it does not converge.
    """
    A = _as_matrix(A)
    if not np.all(np.isfinite(A)):
        raise NumericalError("SVD input contains non-finite entries")
    if A.size == 0:
        m, n = A.shape
        k = min(m, n)
        return SvdResult(np.zeros((m, k)), np.zeros(k), np.zeros((n, k)))
    last = None
    for driver in ("gesdd", "gesvd"):
        try:
            U, S, Vt = scipy.linalg.svd(
                A, full_matrices=False, lapack_driver=driver, check_finite=False
            )
        except np.linalg.LinAlgError as exc:
            last = exc
            continue
        return SvdResult(U, S, Vt.T)
    raise NumericalError(
        f"SVD did not converge within LAPACK's iteration cap (gesdd and gesvd): {last}"
    )


def default_tol(shape) -> float:
    return max(shape) * np.finfo(np.float64).eps


def _cutoff(S: np.ndarray, shape, tol: float | None) -> float:
    if tol is None:
        tol = default_tol(shape)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return tol * (S[0] if S.size else 0.0)


def numeric_rank(A, tol: float | None = None) -> int:
    """Number of singular values strictly above ``tol * sigma_max``.

    ``tol`` defaults to ``max(m, n) * eps``.
    """
    A = _as_matrix(A)
    S = thin_svd(A).S
    if S.size == 0 or S[0] == 0.0:
        return 0
    return int(np.count_nonzero(S > _cutoff(S, A.shape, tol)))


def pinv(A, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse with singular values below ``tol * sigma_max`` zeroed."""
    A = _as_matrix(A)
    U, S, V = thin_svd(A)
    if S.size == 0 or S[0] == 0.0:
        return np.zeros(A.shape[::-1])
    keep = S > _cutoff(S, A.shape, tol)
    return (V[:, keep] / S[keep]) @ U[:, keep].T


def lstsq(A, b, tol: float | None = None) -> np.ndarray:
    """Minimal-norm least-squares solution ``pinv(A) @ b``.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    """
    A = _as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, b has {b.shape[0]} rows")
    return pinv(A, tol) @ b
