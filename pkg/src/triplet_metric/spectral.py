"""Spectral initialisation of the factor ``A``.

Pipeline: drop the individuals with the largest norms, centre the columns,
rank the other individuals around each anchor with RankCentrality, take logs
of the stationary scores, double-centre, and recover ``A_0`` from a
symmetric-definite generalised eigenproblem.

For anchor ``i`` the responses on triplets ``(i, j, k)`` form a Bradley-Terry
tournament among the remaining individuals where ``j`` beats ``k`` when
``y = +1``. Item scores are ``exp(d^2(x_i, x_j))``, so the log of the
normalised stationary distribution is the squared-distance row up to a
per-row constant, and that constant is annihilated by the centring matrix.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import as_features
from .exceptions import (
    ConfigurationError,
    ConnectivityError,
    ConvergenceError,
    InitializationError,
    InsufficientDataError,
    InvalidInputError,
    RankDeficiencyError,
)
from .simulate import TripletBatch

__all__ = [
    "AnchorTournament",
    "ScoreVector",
    "LogScoreMatrix",
    "SpectralOptions",
    "InitReport",
    "filter_by_norm",
    "center_columns",
    "build_tournament",
    "rank_centrality",
    "assemble_log_matrix",
    "double_center",
    "generalized_eigh",
    "generalized_eig_init",
    "spectral_init",
]

logger = logging.getLogger(__name__)


def filter_by_norm(features, discard_fraction: float = 0.1):
    """Drop the ``ceil(discard_fraction * n)`` individuals with largest norm.

    Returns
    -------
    retained : ndarray, shape (n', p)
        Surviving rows in their original order.
    index_map : ndarray of int, shape (n',)
        ``index_map[a]`` is the original index of retained row ``a``.
    """
    X = as_features(features)
    if not 0.0 <= discard_fraction < 1.0:
        raise ConfigurationError(f"discard_fraction must lie in [0, 1), got {discard_fraction}")
    n = X.shape[0]
    # round first so 0.1 * 120 does not become ceil(12.000000000000002)
    n_drop = math.ceil(round(discard_fraction * n, 9))
    n_keep = n - n_drop
    if n_keep < 3:
        raise InsufficientDataError(f"only {n_keep} individuals survive the norm filter")
    norms = np.linalg.norm(X, axis=1)
    order = np.lexsort((np.arange(n), norms))
    index_map = np.sort(order[:n_keep])
    return X[index_map], index_map


def center_columns(features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    return X - X.mean(axis=0, keepdims=True)


@dataclass
class AnchorTournament:
    """Pairwise comparisons among the items seen from one anchor.

    ``wins[a, b]`` counts how often item ``items[a]`` beat ``items[b]``.
    Indices are in retained (post-filter) numbering.
    """

    anchor: int
    items: np.ndarray
    wins: np.ndarray

    @property
    def comparisons(self) -> dict:
        """``{(j, k): (wins_j, wins_k)}`` for every compared pair with ``j < k``."""
        tot = self.wins + self.wins.T
        a, b = np.nonzero(np.triu(tot, 1))
        return {
            (int(self.items[x]), int(self.items[y])): (int(self.wins[x, y]), int(self.wins[y, x]))
            for x, y in zip(a, b)
        }


def _inverse_map(index_map, n):
    pos = np.full(n, -1, dtype=np.int64)
    pos[np.asarray(index_map)] = np.arange(len(index_map))
    return pos


def _restricted(batch: TripletBatch, index_map):
    """Triplets whose three members survive the filter, in retained numbering."""
    pos = _inverse_map(index_map, batch.n)
    T = pos[batch.triplets]
    keep = np.all(T >= 0, axis=1)
    return T[keep], batch.y[keep]


def _tally(anchor, n_prime, js, ks, ys):
    winners = np.where(ys > 0, js, ks)
    losers = np.where(ys > 0, ks, js)
    # item position: retained index with the anchor removed
    winners = winners - (winners > anchor)
    losers = losers - (losers > anchor)
    m = n_prime - 1
    wins = np.bincount(winners * m + losers, minlength=m * m).reshape(m, m)
    items = np.delete(np.arange(n_prime), anchor)
    return AnchorTournament(anchor=int(anchor), items=items, wins=wins)


def build_tournament(batch: TripletBatch, anchor: int, index_map) -> AnchorTournament:
    """Collect the comparisons ``{j, k}`` from responses on ``(anchor, j, k)``.

    ``anchor`` is a retained index. ``y = +1`` is a win for ``j`` (it is the
    likelier outcome when ``x_j`` is farther from the anchor); ``y = -1`` a win
    for ``k``. Triplets touching a discarded individual are ignored.
    """
    index_map = np.asarray(index_map)
    n_prime = index_map.size
    if not 0 <= anchor < n_prime:
        raise InvalidInputError(f"anchor {anchor} is not a retained index")
    T, y = _restricted(batch, index_map)
    sel = T[:, 0] == anchor
    return _tally(anchor, n_prime, T[sel, 1], T[sel, 2], y[sel])


@dataclass
class ScoreVector:
    """Stationary distribution of one anchor's comparison chain."""

    pi: np.ndarray
    anchor: int = -1
    items: np.ndarray | None = None
    iterations: int = 0
    floor_applied: bool = False


def _transition_matrix(wins):
    tot = wins + wins.T
    frac = np.divide(wins.T, tot, out=np.zeros(tot.shape), where=tot > 0)
    d_max = int((tot > 0).sum(axis=1).max(initial=0))
    P = frac / max(d_max, 1)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def rank_centrality(tournament: AnchorTournament, tol: float = 1e-10,
                    max_iters: int = 100_000) -> ScoreVector:
    """Score items by the stationary distribution of the comparison walk.

    From item ``j`` the walk moves to a compared item ``k`` with probability
    ``(wins_k / (wins_j + wins_k)) / d_max`` and stays put otherwise. Power
    iteration starts from the uniform vector and stops once the L1 change
    drops below ``tol``.

    Raises
    ------
    ConnectivityError
        If the comparison graph is disconnected; the smallest component (in
        retained indices) is attached as ``err.component``.
    ConvergenceError
        If ``max_iters`` iterations do not reach ``tol``.
    """
    wins = np.asarray(tournament.wins, dtype=np.float64)
    items = np.asarray(tournament.items)
    m = wins.shape[0]
    tot = wins + wins.T
    n_comp, labels = connected_components(csr_matrix(tot > 0), directed=False)
    if n_comp > 1:
        sizes = np.bincount(labels)
        smallest = int(np.argmin(sizes))
        comp = items[labels == smallest].tolist()
        raise ConnectivityError(
            f"anchor {tournament.anchor}: comparison graph has {n_comp} components; "
            f"smallest is {comp[:10]}{'...' if len(comp) > 10 else ''}",
            component=comp,
        )
    P = _transition_matrix(wins)
    pi = np.full(m, 1.0 / m)
    for it in range(1, max_iters + 1):
        nxt = pi @ P
        delta = np.abs(nxt - pi).sum()
        pi = nxt
        if delta < tol:
            break
    else:
        raise ConvergenceError(
            f"anchor {tournament.anchor}: power iteration did not converge in {max_iters} steps"
        )
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return ScoreVector(pi=pi, anchor=tournament.anchor, items=items, iterations=it)


@dataclass
class LogScoreMatrix:
    """``data[i, j] = log(max(pi^i_j, floor))`` with a zero diagonal."""

    data: np.ndarray
    floor_count: int = 0
    filled_rows: list = field(default_factory=list)


def assemble_log_matrix(scores, n_prime: int, pi_floor: float = 1e-12) -> LogScoreMatrix:
    """Stack per-anchor log scores into an ``(n', n')`` matrix.

    ``scores[i]`` belongs to anchor ``i``; a ``None`` entry marks an anchor that
    was skipped, whose row is replaced by the mean of the completed rows.
    """
    if len(scores) != n_prime:
        raise InvalidInputError(f"expected {n_prime} score vectors, got {len(scores)}")
    P = np.zeros((n_prime, n_prime))
    floors = 0
    done = np.zeros(n_prime, dtype=bool)
    for i, sv in enumerate(scores):
        if sv is None:
            continue
        pi = np.asarray(sv.pi, dtype=np.float64)
        items = sv.items if sv.items is not None else np.delete(np.arange(n_prime), i)
        low = pi < pi_floor
        if low.any():
            sv.floor_applied = True
            floors += int(low.sum())
        P[i, items] = np.log(np.maximum(pi, pi_floor))
        done[i] = True
    filled = np.flatnonzero(~done).tolist()
    if filled:
        if not done.any():
            raise InitializationError("no anchor produced a score vector")
        P[~done] = P[done].mean(axis=0)
    np.fill_diagonal(P, 0.0)
    return LogScoreMatrix(data=P, floor_count=floors, filled_rows=filled)


def double_center(log_matrix) -> np.ndarray:
    """``-J P J / 2`` with ``J = I - 11^T/n``."""
    P = np.asarray(getattr(log_matrix, "data", log_matrix), dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got {P.shape}")
    C = P - P.mean(axis=0, keepdims=True)
    C = C - C.mean(axis=1, keepdims=True)
    return -0.5 * C


def generalized_eigh(gram, features):
    """Generalised eigenpairs of ``(X^T H X / n'^2, X^T X / n')`` by Cholesky
    reduction.

    Returns eigenvalues in nonincreasing order and the matching eigenvectors,
    normalised so that ``U^T (X^T X / n') U = I``.
    """
    H = np.asarray(gram, dtype=np.float64)
    X = np.asarray(features, dtype=np.float64)
    n_prime, p = X.shape
    if H.shape != (n_prime, n_prime):
        raise InvalidInputError(f"gram shape {H.shape} does not match {n_prime} individuals")
    if n_prime <= p:
        raise RankDeficiencyError(f"need more individuals than features (n'={n_prime}, p={p})")
    Psi = X.T @ X / n_prime
    M = X.T @ H @ X / n_prime**2
    M = 0.5 * (M + M.T)
    try:
        L = sla.cholesky(Psi, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError("X'^T X' is not positive definite") from exc
    d = np.abs(np.diag(L))
    if d.min() <= 1e-7 * d.max():
        raise RankDeficiencyError("X'^T X' is numerically singular")
    B = sla.solve_triangular(L, M, lower=True)
    C = sla.solve_triangular(L, B.T, lower=True)
    w, Q = np.linalg.eigh(0.5 * (C + C.T))
    U = sla.solve_triangular(L.T, Q, lower=False)
    order = np.argsort(w)[::-1]
    return w[order], U[:, order]


def _factor_from_spectrum(w, U, r):
    top = w[:r]
    clipped = int(np.sum(top <= 0))
    return U[:, :r] * np.sqrt(np.clip(top, 0.0, None)), clipped


def generalized_eig_init(gram, features, r: int) -> np.ndarray:
    """``A_0 = U_r Lambda_r^{1/2}`` from the top ``r`` generalised eigenpairs.

    Negative eigenvalues are clipped to zero (with a warning) so the square
    root stays real.
    """
    p = np.asarray(features).shape[1]
    if not 1 <= r <= p:
        raise ConfigurationError(f"rank must satisfy 1 <= r <= p, got r={r}, p={p}")
    w, U = generalized_eigh(gram, features)
    A0, clipped = _factor_from_spectrum(w, U, r)
    if clipped:
        warnings.warn(f"{clipped} of the top {r} generalised eigenvalues were <= 0", RuntimeWarning)
    return A0


@dataclass
class SpectralOptions:
    discard_fraction: float = 0.1
    pi_floor: float = 1e-12
    tol: float = 1e-10
    max_iters: int = 100_000
    symmetrize: bool = False
    max_disconnected_fraction: float = 0.2
    threads: int = 1


@dataclass
class InitReport:
    n_retained: int
    index_map: list
    n_triplets_used: int
    floor_count: int
    rc_iterations: list
    skipped_anchors: list
    eigenvalues: list
    clipped_eigenvalues: int = 0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _anchor_groups(T, y, n_prime):
    order = np.argsort(T[:, 0], kind="stable")
    T, y = T[order], y[order]
    bounds = np.searchsorted(T[:, 0], np.arange(n_prime + 1))
    for a in range(n_prime):
        lo, hi = bounds[a], bounds[a + 1]
        yield a, T[lo:hi, 1], T[lo:hi, 2], y[lo:hi]


def spectral_init(batch: TripletBatch, features, r: int, options: SpectralOptions | None = None):
    """Estimate ``A_0`` from triplet responses.

    Only triplets whose three members survive the norm filter are used. An
    anchor whose comparison graph is disconnected is skipped and its row of
    log scores imputed; if more than ``max_disconnected_fraction`` of anchors
    are skipped the initialisation fails.

    Returns
    -------
    A0 : ndarray, shape (p, r)
    report : InitReport
    """
    opts = options or SpectralOptions()
    X = as_features(features)
    if batch.n != X.shape[0]:
        raise InvalidInputError(f"batch indexes {batch.n} individuals, features have {X.shape[0]}")
    if not 1 <= r <= X.shape[1]:
        raise ConfigurationError(f"rank must satisfy 1 <= r <= p, got r={r}, p={X.shape[1]}")
    Xr, index_map = filter_by_norm(X, opts.discard_fraction)
    Xc = center_columns(Xr)
    n_prime = index_map.size
    T, y = _restricted(batch, index_map)

    def solve(group):
        a, js, ks, ys = group
        tour = _tally(a, n_prime, js, ks, ys)
        try:
            return rank_centrality(tour, opts.tol, opts.max_iters)
        except ConnectivityError as exc:
            logger.debug("skipping anchor %d: %s", a, exc)
            return None

    groups = _anchor_groups(T, y, n_prime)
    if opts.threads and opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            scores = list(pool.map(solve, groups))
    else:
        scores = [solve(g) for g in groups]

    skipped = [a for a, sv in enumerate(scores) if sv is None]
    if len(skipped) > opts.max_disconnected_fraction * n_prime:
        raise InitializationError(
            f"{len(skipped)} of {n_prime} anchors have disconnected comparison graphs "
            f"(limit {opts.max_disconnected_fraction:.0%})"
        )
    log_scores = assemble_log_matrix(scores, n_prime, opts.pi_floor)
    P = log_scores.data
    if opts.symmetrize:
        P = 0.5 * (P + P.T)
    H = double_center(P)
    w, U = generalized_eigh(H, Xc)
    A0, clipped = _factor_from_spectrum(w, U, r)
    notes = []
    if clipped:
        notes.append(f"{clipped} of the top {r} generalised eigenvalues were <= 0 and clipped")
        warnings.warn(notes[-1], RuntimeWarning)
    report = InitReport(
        n_retained=int(n_prime),
        index_map=index_map.tolist(),
        n_triplets_used=int(T.shape[0]),
        floor_count=log_scores.floor_count,
        rc_iterations=[None if sv is None else sv.iterations for sv in scores],
        skipped_anchors=skipped,
        eigenvalues=w.tolist(),
        clipped_eigenvalues=clipped,
        warnings=notes,
    )
    return A0, report
