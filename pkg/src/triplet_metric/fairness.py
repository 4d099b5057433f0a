"""Individual-fairness audits under a Mahalanobis input metric.

A predictor is ``l``-individually fair when ``D(f(x_i), f(x_j)) <= l * d_K(x_i, x_j)``
for every pair. :func:`audit` measures the ratios ``xi_ij`` of output to input
distance and reports their maximum; :func:`certify_transfer` checks how a
fairness level measured against an estimated metric carries over to the
true one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .core import as_features, as_metric, metric_gap
from .exceptions import InvalidInputError
from .simulate import stage_rng

__all__ = [
    "PredictionSet",
    "AuditReport",
    "CertificationRecord",
    "audit",
    "transfer_bound",
    "smallest_nonzero_eigenvalue",
    "certify_transfer",
    "isometric_predictor",
]

DEFAULT_PAIR_CAP = 2_000_000
ZERO_RTOL = 1e-12
_PAIR_CHUNK = 1 << 18


@dataclass
class PredictionSet:
    """Predictor outputs, one row per individual.

    ``outcome_metric`` is ``"absolute"`` (scalar outputs) or ``"euclidean"``;
    left as ``None`` it is inferred from the output shape.
    """

    outputs: np.ndarray
    outcome_metric: str | None = None

    def __post_init__(self):
        out = np.asarray(self.outputs, dtype=np.float64)
        if out.ndim == 1:
            out = out[:, None]
        if out.ndim != 2:
            raise InvalidInputError(f"outputs must be 1-D or 2-D, got shape {out.shape}")
        if not np.all(np.isfinite(out)):
            raise InvalidInputError("predictions contain non-finite values")
        if self.outcome_metric is None:
            self.outcome_metric = "absolute" if out.shape[1] == 1 else "euclidean"
        if self.outcome_metric not in ("absolute", "euclidean"):
            raise InvalidInputError(f"unknown outcome metric {self.outcome_metric!r}")
        if self.outcome_metric == "absolute" and out.shape[1] != 1:
            raise InvalidInputError("absolute-difference metric needs scalar outputs")
        self.outputs = out

    def __len__(self):
        return self.outputs.shape[0]


@dataclass
class AuditReport:
    l_max: float
    infinite_flag: bool
    q50: float
    q90: float
    q99: float
    zero_distance_violations: int
    pairs_evaluated: int
    pairs_skipped: int
    sampled: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["l_max"]):
            d["l_max"] = "inf"
        return d


def _metric_root(K):
    # K = L L^T from the eigendecomposition; avoids cancellation in d^2
    w, Q = np.linalg.eigh(0.5 * (K + K.T))
    return Q * np.sqrt(np.clip(w, 0.0, None)), max(float(w.max(initial=0.0)), 0.0)


def _pair_index(q, n):
    # linear index over i < j in row-major order -> (i, j)
    q = np.asarray(q, dtype=np.int64)
    total = n * (n - 1) // 2
    i = n - 2 - np.floor(np.sqrt(-8.0 * q + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5).astype(np.int64)
    j = q + i + 1 - total + (n - i) * ((n - i) - 1) // 2
    return i, j


def _pairs(n, pair_cap, seed):
    total = n * (n - 1) // 2
    if total <= pair_cap:
        return np.arange(total, dtype=np.int64), False
    rng = stage_rng(seed, "audit")
    return np.sort(rng.choice(total, size=pair_cap, replace=False)), True


def _ratios(pred: PredictionSet, X, K, pair_cap, seed):
    n = X.shape[0]
    L, knorm = _metric_root(K)
    sq = math.sqrt(knorm)
    qs, sampled = _pairs(n, pair_cap, seed)
    d_all, D_all, dx_all = [], [], []
    for start in range(0, qs.size, _PAIR_CHUNK):
        i, j = _pair_index(qs[start:start + _PAIR_CHUNK], n)
        delta = X[i] - X[j]
        d_all.append(np.linalg.norm(delta @ L, axis=1))
        dx_all.append(np.linalg.norm(delta, axis=1))
        D_all.append(np.linalg.norm(pred.outputs[i] - pred.outputs[j], axis=1))
    d = np.concatenate(d_all) if d_all else np.empty(0)
    D = np.concatenate(D_all) if D_all else np.empty(0)
    dx = np.concatenate(dx_all) if dx_all else np.empty(0)
    return d, D, dx, sq, sampled


def audit(predictions: PredictionSet, features, metric, pair_cap: int = DEFAULT_PAIR_CAP,
          seed: int = 0) -> AuditReport:
    """Measure ``xi_ij = D(f(x_i), f(x_j)) / d_K(x_i, x_j)`` over pairs.

    All unordered pairs are used unless there are more than ``pair_cap``, in
    which case a seeded uniform sample of ``pair_cap`` distinct pairs is
    taken. Pairs with zero input and output distance are skipped. A zero
    input distance with a positive output distance is a violation of every
    finite ``l``: it is counted and sets ``infinite_flag`` (``l_max = inf``).
    """
    X = as_features(features, min_rows=2)
    if not isinstance(predictions, PredictionSet):
        predictions = PredictionSet(predictions)
    if len(predictions) != X.shape[0]:
        raise InvalidInputError(f"{len(predictions)} predictions for {X.shape[0]} individuals")
    K = as_metric(metric, X.shape[1])
    d, D, dx, sq, sampled = _ratios(predictions, X, K, pair_cap, seed)

    d_zero = d <= ZERO_RTOL * sq * dx
    D_zero = D <= ZERO_RTOL * max(float(D.max(initial=0.0)), 1e-300)
    skip = d_zero & D_zero
    violate = d_zero & ~D_zero
    ok = ~d_zero
    xi = D[ok] / d[ok]
    n_violate = int(violate.sum())
    if xi.size:
        q50, q90, q99 = (float(v) for v in np.quantile(xi, [0.5, 0.9, 0.99]))
        finite_max = float(xi.max())
    else:
        q50 = q90 = q99 = finite_max = 0.0
    return AuditReport(
        l_max=math.inf if n_violate else finite_max,
        infinite_flag=bool(n_violate),
        q50=q50,
        q90=q90,
        q99=q99,
        zero_distance_violations=n_violate,
        pairs_evaluated=int(d.size),
        pairs_skipped=int(skip.sum()),
        sampled=sampled,
    )


def transfer_bound(l: float, metric_gap_eps: float, sigma_min_true: float) -> float:
    """Fairness level ``l * (1 + sqrt(eps / sigma_min))`` transferred to the true metric."""
    if l < 0 or metric_gap_eps < 0:
        raise InvalidInputError("l and eps must be nonnegative")
    if not sigma_min_true > 0:
        raise InvalidInputError(
            "the transfer bound is vacuous for sigma_min <= 0; it needs the true metric "
            "to be positive definite on its range (pass its smallest nonzero eigenvalue)"
        )
    return l * (1.0 + math.sqrt(metric_gap_eps / sigma_min_true))


def smallest_nonzero_eigenvalue(metric, rtol: float = 1e-8) -> float:
    w = np.linalg.eigvalsh(np.asarray(metric, dtype=np.float64))
    top = w.max(initial=0.0)
    nz = w[w > rtol * top]
    if nz.size == 0:
        raise InvalidInputError("metric has no nonzero eigenvalues")
    return float(nz.min())


@dataclass
class CertificationRecord:
    """Outcome of one transfer check.

    ``holds`` compares the measured ``l_star`` to ``bound``.
    ``pairwise_bound`` is ``l_hat * max sqrt(1 + eps ||dx||^2 / d_star^2)``
    over the audited pairs, which always dominates ``l_star``; it is reported
    to show how far the data stray from the range of the true metric.
    """

    l_hat: float
    l_star: float
    eps: float
    sigma_min: float
    bound: float
    holds: bool
    pairwise_bound: float
    audit_estimated: AuditReport
    audit_true: AuditReport

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("l_hat", "l_star", "eps", "sigma_min", "bound", "holds", "pairwise_bound")}
        for k in ("l_hat", "l_star", "bound", "pairwise_bound"):
            if math.isinf(d[k]):
                d[k] = "inf"
        d["audit_estimated"] = self.audit_estimated.to_dict()
        d["audit_true"] = self.audit_true.to_dict()
        return d


def certify_transfer(predictions, features, est_metric, true_metric,
                     pair_cap: int = DEFAULT_PAIR_CAP, seed: int = 0) -> CertificationRecord:
    """Audit against both metrics and compare ``l_star`` with the transfer bound.

    ``eps`` is the spectral norm of ``est - true`` and ``sigma_min`` the
    smallest nonzero eigenvalue of ``true_metric``. For a rank-deficient true
    metric the bound is only guaranteed when the pair differences and the
    perturbation lie in its range.
    """
    X = as_features(features, min_rows=2)
    if not isinstance(predictions, PredictionSet):
        predictions = PredictionSet(predictions)
    K_est = as_metric(est_metric, X.shape[1])
    K_true = as_metric(true_metric, X.shape[1])
    rep_est = audit(predictions, X, K_est, pair_cap, seed)
    rep_true = audit(predictions, X, K_true, pair_cap, seed)
    eps = metric_gap(K_est, K_true)
    sigma = smallest_nonzero_eigenvalue(K_true)
    bound = transfer_bound(rep_est.l_max, eps, sigma) if math.isfinite(rep_est.l_max) else math.inf

    d, _, dx, sq, _ = _ratios(predictions, X, K_true, pair_cap, seed)
    ok = d > ZERO_RTOL * sq * dx
    if math.isfinite(rep_est.l_max) and ok.any():
        pairwise = rep_est.l_max * float(np.sqrt(1.0 + eps * (dx[ok] / d[ok]) ** 2).max())
    else:
        pairwise = math.inf
    return CertificationRecord(
        l_hat=rep_est.l_max,
        l_star=rep_true.l_max,
        eps=eps,
        sigma_min=sigma,
        bound=bound,
        holds=bool(rep_true.l_max <= bound),
        pairwise_bound=pairwise,
        audit_estimated=rep_est,
        audit_true=rep_true,
    )


def isometric_predictor(features, factor) -> PredictionSet:
    """The embedding ``x -> A^T x`` with Euclidean outputs; 1-Lipschitz
    (exactly isometric) for ``K = A A^T``."""
    X = np.asarray(features, dtype=np.float64)
    return PredictionSet(X @ np.asarray(factor, dtype=np.float64), "euclidean")
