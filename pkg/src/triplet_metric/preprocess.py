"""PCA projection and standardisation for tabular datasets."""

from __future__ import annotations

import numpy as np

from .core import as_features
from .exceptions import ConfigurationError

__all__ = ["pca_project", "pca_standardize"]


def pca_project(features, k: int):
    """Project centred data onto the top ``k`` principal directions.

    Directions are eigenvectors of the sample covariance in decreasing
    eigenvalue order; each is signed so its largest-magnitude loading is
    positive.

    Returns
    -------
    scores : ndarray, shape (n, k)
    components : ndarray, shape (p, k)
    mean : ndarray, shape (p,)
    """
    X = as_features(features, min_rows=2)
    n, p = X.shape
    if not 1 <= k <= min(n, p):
        raise ConfigurationError(f"k must satisfy 1 <= k <= min(n, p) = {min(n, p)}, got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(n - 1, 1)
    w, V = np.linalg.eigh(cov)
    V = V[:, np.argsort(w)[::-1][:k]]
    lead = V[np.argmax(np.abs(V), axis=0), np.arange(k)]
    V = V * np.where(lead < 0, -1.0, 1.0)
    return Xc @ V, V, mean


def pca_standardize(features, k: int) -> np.ndarray:
    """Top-``k`` principal component scores, each scaled to mean 0 and unit
    standard deviation. Constant components are returned as zeros."""
    Z, _, _ = pca_project(features, k)
    Z = Z - Z.mean(axis=0)
    sd = Z.std(axis=0)
    scale = np.max(np.abs(Z), axis=0, initial=0.0)
    const = sd <= 1e-12 * np.maximum(scale, 1e-300)
    Z[:, const] = 0.0
    Z[:, ~const] /= sd[~const]
    return Z
