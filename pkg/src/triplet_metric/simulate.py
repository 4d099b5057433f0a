"""Synthetic features, ground-truth metrics, triplet sampling and
Bradley-Terry responses.

Every stochastic stage draws from its own Philox stream derived from
``(seed, stage)`` via :class:`numpy.random.SeedSequence`, so regenerating one
stage never perturbs another::

    features  -> spawn key 0
    metric    -> spawn key 1
    triplets  -> spawn key 2
    responses -> spawn key 3
    audit     -> spawn key 4   (pair subsampling in fairness audits)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import as_factor, as_features, as_triplets, _margins_from_embedding
from .exceptions import ConfigurationError, InvalidInputError

__all__ = [
    "STAGES",
    "stage_rng",
    "FeatureDistribution",
    "TripletBatch",
    "gen_features",
    "gen_metric",
    "sample_triplets",
    "sample_responses",
    "count_ordered_triplets",
]

STAGES = {"features": 0, "metric": 1, "triplets": 2, "responses": 3, "audit": 4}

DISTRIBUTIONS = ("gaussian-diagonal", "gaussian-ar", "bernoulli")

_CHUNK = 1 << 20


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    """Counter-based generator for one pipeline stage."""
    if stage not in STAGES:
        raise ConfigurationError(f"unknown RNG stage {stage!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=(STAGES[stage],))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class FeatureDistribution:
    """Generator for synthetic individuals.

    ``gaussian-diagonal``
        ``N(0, diag)`` where a random half of the diagonal equals ``chi`` and
        the rest ``1/chi``.
    ``gaussian-ar``
        ``N(0, Sigma)`` with ``Sigma[a, b] = rho**|a - b|``.
    ``bernoulli``
        a random half of the coordinates ``Bern(1 - chi)``, the others
        ``Bern(1 - 1/chi)``; probabilities are clipped to ``[0, 1]``.
    """

    kind: str = "gaussian-diagonal"
    p: int = 20
    seed: int = 0
    chi: float = 5.0
    rho: float = 0.8

    def __post_init__(self):
        if self.kind not in DISTRIBUTIONS:
            raise ConfigurationError(
                f"unknown distribution {self.kind!r}; expected one of {DISTRIBUTIONS}"
            )
        if self.p < 1:
            raise ConfigurationError(f"p must be >= 1, got {self.p}")
        if self.kind in ("gaussian-diagonal", "bernoulli") and not self.chi >= 1:
            raise ConfigurationError(f"chi must be >= 1, got {self.chi}")
        if self.kind == "gaussian-ar" and not 0 < self.rho < 1:
            raise ConfigurationError(f"rho must lie in (0, 1), got {self.rho}")

    def _split(self, rng):
        # random half of the coordinates, drawn first so it is stable in n
        mask = np.zeros(self.p, dtype=bool)
        mask[rng.permutation(self.p)[: self.p // 2]] = True
        return mask

    def covariance(self) -> np.ndarray:
        """Population covariance of the Gaussian kinds."""
        if self.kind == "gaussian-ar":
            idx = np.arange(self.p)
            return self.rho ** np.abs(idx[:, None] - idx[None, :])
        if self.kind == "gaussian-diagonal":
            mask = self._split(stage_rng(self.seed, "features"))
            return np.diag(np.where(mask, self.chi, 1.0 / self.chi))
        raise ConfigurationError("covariance is only defined for Gaussian kinds")

    def bernoulli_probabilities(self) -> np.ndarray:
        mask = self._split(stage_rng(self.seed, "features"))
        probs = np.where(mask, 1.0 - self.chi, 1.0 - 1.0 / self.chi)
        return np.clip(probs, 0.0, 1.0)


def gen_features(dist: FeatureDistribution, n: int) -> np.ndarray:
    """Draw an ``(n, p)`` feature matrix; deterministic in ``dist.seed``."""
    if n < 3:
        raise ConfigurationError(f"n must be >= 3, got {n}")
    rng = stage_rng(dist.seed, "features")
    if dist.kind == "gaussian-ar":
        L = np.linalg.cholesky(dist.covariance())
        return rng.standard_normal((n, dist.p)) @ L.T
    mask = dist._split(rng)
    if dist.kind == "gaussian-diagonal":
        scale = np.sqrt(np.where(mask, dist.chi, 1.0 / dist.chi))
        return rng.standard_normal((n, dist.p)) * scale
    probs = np.clip(np.where(mask, 1.0 - dist.chi, 1.0 - 1.0 / dist.chi), 0.0, 1.0)
    return (rng.random((n, dist.p)) < probs).astype(np.float64)


def gen_metric(p: int, r: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random rank-``r`` ground truth ``(K_star, A_star)`` with ``||K_star||_2 = 1``."""
    if not 1 <= r <= p:
        raise ConfigurationError(f"rank must satisfy 1 <= r <= p, got r={r}, p={p}")
    rng = stage_rng(seed, "metric")
    A = rng.standard_normal((p, r))
    A /= np.linalg.norm(A, 2)
    return A @ A.T, A


def count_ordered_triplets(n: int) -> int:
    return n * (n - 1) * (n - 2)


def _decode(idx: np.ndarray, n: int) -> np.ndarray:
    # lexicographic rank -> (i, j, k) with all three distinct
    per_anchor = (n - 1) * (n - 2)
    i = idx // per_anchor
    rem = idx % per_anchor
    jj = rem // (n - 2)
    kk = rem % (n - 2)
    j = jj + (jj >= i)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    k = kk + (kk >= lo)
    k = k + (k >= hi)
    return np.stack([i, j, k], axis=1)


def sample_triplets(n: int, s: float, seed: int) -> np.ndarray:
    """Include every ordered triple of distinct indices independently with
    probability ``s``.

    Returns an ``(m, 3)`` int64 array in lexicographic ``(i, j, k)`` order.
    """
    if not 0.0 <= s <= 1.0:
        raise ConfigurationError(f"sampling rate must lie in [0, 1], got {s}")
    if n < 3:
        raise ConfigurationError(f"n must be >= 3, got {n}")
    total = count_ordered_triplets(n)
    if s == 0.0:
        return np.empty((0, 3), dtype=np.int64)
    if s == 1.0:
        return _decode(np.arange(total, dtype=np.int64), n)
    rng = stage_rng(seed, "triplets")
    chunks = []
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        keep = np.flatnonzero(rng.random(stop - start) < s)
        chunks.append(_decode(keep.astype(np.int64) + start, n))
    return np.concatenate(chunks) if chunks else np.empty((0, 3), dtype=np.int64)


@dataclass
class TripletBatch:
    """Observed triplets with their ``+1/-1`` responses.

    ``y = +1`` means ``x_i`` was judged farther from ``x_j`` than from ``x_k``
    under the response model ``P(y) = logistic(y * margin)``.
    """

    triplets: np.ndarray
    y: np.ndarray
    n: int
    sampling_rate: float = float("nan")
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.triplets = as_triplets(self.triplets, self.n)
        self.y = np.asarray(self.y).astype(np.int8).reshape(-1)
        if self.y.shape[0] != self.triplets.shape[0]:
            raise InvalidInputError(
                f"{self.triplets.shape[0]} triplets but {self.y.shape[0]} responses"
            )
        if not np.all((self.y == 1) | (self.y == -1)):
            raise InvalidInputError("responses must be -1 or +1")

    def __len__(self) -> int:
        return self.triplets.shape[0]

    def check_distinct(self) -> None:
        T = self.triplets
        codes = (T[:, 0] * self.n + T[:, 1]) * self.n + T[:, 2]
        if np.unique(codes).size != codes.size:
            raise InvalidInputError("triplet batch contains duplicate triplets")

    def sorted(self) -> "TripletBatch":
        """Copy in lexicographic ``(i, j, k)`` order."""
        order = np.lexsort(self.triplets.T[::-1])
        return TripletBatch(self.triplets[order], self.y[order], self.n, self.sampling_rate)


def sample_responses(features, factor_star, triplets, seed: int,
                     sampling_rate: float = float("nan")) -> TripletBatch:
    """Draw ``y_t`` with ``P(y_t = 1) = logistic(margin_t)`` independently.

    The ``t``-th uniform of the ``responses`` stream decides triplet ``t``,
    so the result depends only on ``seed`` and the triplet order.
    """
    X = as_features(features)
    A = as_factor(factor_star, X.shape[1])
    T = as_triplets(triplets, X.shape[0])
    margins = _margins_from_embedding(X @ A, T[:, 0], T[:, 1], T[:, 2])
    u = stage_rng(seed, "responses").random(T.shape[0])
    y = np.where(u < expit(margins), 1, -1).astype(np.int8)
    return TripletBatch(T, y, X.shape[0], sampling_rate)
