"""Shared linear algebra: feature/factor/metric validation, Mahalanobis
distances, triplet margins and orthogonal Procrustes alignment.

Arrays are plain ``numpy.ndarray`` objects. A feature set is ``(n, p)`` with one
individual per row, a factor is ``(p, r)`` and a metric is ``(p, p)`` with
``K = A @ A.T``. Triplets are integer arrays of shape ``(m, 3)`` holding
``(i, j, k)``; the margin of a triplet is ``d_K(x_i, x_j)**2 - d_K(x_i, x_k)**2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError

__all__ = [
    "AlignmentResult",
    "as_features",
    "as_factor",
    "as_metric",
    "as_triplets",
    "mahalanobis_sq",
    "squared_distance_matrix",
    "comparison_matrix",
    "triplet_margin",
    "triplet_margins",
    "procrustes_align",
    "aligned_error",
    "metric_gap",
]

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-8


def as_features(X, min_rows: int = 3) -> np.ndarray:
    """Validate a feature matrix and return it as a float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"features must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n < min_rows:
        raise InvalidInputError(f"need at least {min_rows} individuals, got {n}")
    if p < 1:
        raise InvalidInputError("features need at least one column")
    if not np.all(np.isfinite(X)):
        row, col = np.argwhere(~np.isfinite(X))[0]
        raise InvalidInputError(f"non-finite feature at row {row}, column {col}")
    return X


def as_factor(A, p: int | None = None) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InvalidInputError(f"factor must be 2-D, got shape {A.shape}")
    rows, r = A.shape
    if not 1 <= r <= rows:
        raise InvalidInputError(f"factor rank must satisfy 1 <= r <= p, got {A.shape}")
    if p is not None and rows != p:
        raise InvalidInputError(f"factor has {rows} rows but features have {p} columns")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("factor has non-finite entries")
    return A


def as_metric(K, p: int | None = None) -> np.ndarray:
    """Validate a Mahalanobis matrix.

    The matrix must be square, symmetric to ``1e-10`` relative and positive
    semi-definite up to ``-1e-8 * ||K||`` on its smallest eigenvalue.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidInputError(f"metric must be square, got shape {K.shape}")
    if p is not None and K.shape[0] != p:
        raise InvalidInputError(f"metric is {K.shape[0]}x{K.shape[0]} but features have {p} columns")
    if not np.all(np.isfinite(K)):
        raise InvalidInputError("metric has non-finite entries")
    scale = np.abs(K).max(initial=0.0)
    if np.abs(K - K.T).max(initial=0.0) > SYMMETRY_RTOL * max(scale, 1e-300):
        raise InvalidInputError("metric is not symmetric")
    if scale > 0:
        eig = np.linalg.eigvalsh(0.5 * (K + K.T))
        norm = np.abs(eig).max()
        if eig[0] < -PSD_RTOL * norm:
            raise InvalidInputError(
                f"metric is not positive semi-definite (smallest eigenvalue {eig[0]:.3e})"
            )
    return K


def as_triplets(triplets, n: int | None = None) -> np.ndarray:
    """Validate an ``(m, 3)`` array of triplet indices."""
    T = np.asarray(triplets)
    if T.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    if T.ndim == 1:
        T = T[None, :]
    if T.ndim != 2 or T.shape[1] != 3:
        raise InvalidInputError(f"triplets must have shape (m, 3), got {T.shape}")
    if not np.issubdtype(T.dtype, np.integer):
        raise InvalidInputError("triplet indices must be integers")
    T = T.astype(np.int64, copy=False)
    i, j, k = T.T
    if np.any((i == j) | (j == k) | (i == k)):
        bad = np.flatnonzero((i == j) | (j == k) | (i == k))[0]
        raise InvalidInputError(f"triplet {tuple(T[bad])} repeats an index")
    if np.any(T < 0) or (n is not None and np.any(T >= n)):
        raise InvalidInputError(f"triplet index out of range for n={n}")
    return T


def mahalanobis_sq(features, metric, i: int, j: int) -> float:
    """Squared Mahalanobis distance ``(x_i - x_j)^T K (x_i - x_j)``."""
    X = np.asarray(features, dtype=np.float64)
    K = np.asarray(metric, dtype=np.float64)
    if X.ndim != 2 or K.shape != (X.shape[1], X.shape[1]):
        raise InvalidInputError(
            f"metric shape {K.shape} does not match feature dimension {X.shape[-1]}"
        )
    n = X.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise InvalidInputError(f"index out of range for n={n}")
    if i == j:
        return 0.0
    diff = X[i] - X[j]
    return float(diff @ K @ diff)


def squared_distance_matrix(features, metric) -> np.ndarray:
    """All pairwise squared Mahalanobis distances as an ``(n, n)`` array."""
    X = np.asarray(features, dtype=np.float64)
    K = np.asarray(metric, dtype=np.float64)
    if K.shape != (X.shape[1], X.shape[1]):
        raise InvalidInputError("metric does not match feature dimension")
    diff = X[:, None, :] - X[None, :, :]
    D = np.einsum("abi,ij,abj->ab", diff, K, diff)
    np.fill_diagonal(D, 0.0)
    return 0.5 * (D + D.T)


def comparison_matrix(features, t) -> np.ndarray:
    """The symmetric ``p x p`` matrix ``M_t`` with ``Tr(M_t K) = d^2(i,j) - d^2(i,k)``.

    Only meant for tests and small probes; the margin routines never build it.
    """
    X = np.asarray(features, dtype=np.float64)
    i, j, k = as_triplets(t, X.shape[0])[0]
    xi, xj, xk = X[i], X[j], X[k]
    # S + S^T keeps the result exactly symmetric in floating point
    S = np.outer(xi, xk) - np.outer(xi, xj)
    return (S + S.T) + (np.outer(xj, xj) - np.outer(xk, xk))


def triplet_margin(features, factor, t) -> float:
    """``||A^T (x_i - x_j)||^2 - ||A^T (x_i - x_k)||^2`` for a single triplet."""
    X = np.asarray(features, dtype=np.float64)
    A = as_factor(factor, X.shape[1])
    i, j, k = as_triplets(t, X.shape[0])[0]
    u = (X[i] - X[j]) @ A
    v = (X[i] - X[k]) @ A
    return float(u @ u - v @ v)


def triplet_margins(features, factor, triplets) -> np.ndarray:
    """Vectorised :func:`triplet_margin` over an ``(m, 3)`` triplet array."""
    X = np.asarray(features, dtype=np.float64)
    A = as_factor(factor, X.shape[1])
    T = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    return _margins_from_embedding(X @ A, T[:, 0], T[:, 1], T[:, 2])


def _margins_from_embedding(Y, i, j, k):
    u = Y[i] - Y[j]
    v = Y[i] - Y[k]
    return np.einsum("ab,ab->a", u, u) - np.einsum("ab,ab->a", v, v)


@dataclass(frozen=True)
class AlignmentResult:
    """Optimal rotation ``O`` and the residual ``||Z O - A_ref||_F``."""

    rotation: np.ndarray
    aligned_error: float


def procrustes_align(candidate, reference) -> AlignmentResult:
    """Rotate ``candidate`` onto ``reference`` (orthogonal Procrustes).

    With ``U S W^T`` the SVD of ``candidate^T @ reference`` the minimiser of
    ``||candidate @ O - reference||_F`` over orthogonal ``O`` is ``U @ W^T``.
    When singular values repeat or vanish ``O`` is not unique; only the
    residual is then meaningful.
    """
    Z = np.asarray(candidate, dtype=np.float64)
    B = np.asarray(reference, dtype=np.float64)
    if Z.ndim != 2 or Z.shape != B.shape:
        raise InvalidInputError(f"shape mismatch: {Z.shape} vs {B.shape}")
    U, _, Wt = np.linalg.svd(Z.T @ B)
    O = U @ Wt
    err = float(np.linalg.norm(Z @ O - B))
    return AlignmentResult(rotation=O, aligned_error=err)


def aligned_error(candidate, reference) -> float:
    return procrustes_align(candidate, reference).aligned_error


def metric_gap(a, b, norm: str = "spectral") -> float:
    """Norm of ``a - b``; ``norm`` is ``"spectral"`` (default) or ``"fro"``.

    The spectral norm is the largest absolute eigenvalue of the symmetric
    difference, from a symmetric eigensolver.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    if norm == "fro":
        return float(np.linalg.norm(diff))
    if norm != "spectral":
        raise InvalidInputError(f"unknown norm {norm!r}")
    eig = np.linalg.eigvalsh(0.5 * (diff + diff.T))
    return float(np.abs(eig).max(initial=0.0))
