"""Logistic triplet loss, its derivatives and full-batch gradient descent.

The loss of a factor ``A`` is the mean over observed triplets of
``softplus(-y_t * m_t)`` with margin ``m_t = Tr(M_t A A^T)``. With
``u = A^T (x_i - x_j)`` and ``v = A^T (x_i - x_k)`` one has
``M_t A = (x_i - x_j) u^T - (x_i - x_k) v^T``, so per-triplet gradient
contributions are scattered into an ``(n, r)`` buffer and mapped back with a
single ``X^T`` product. Nothing of size ``p x p`` per triplet is formed.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .core import as_factor, as_features, procrustes_align
from .exceptions import ConfigurationError, DivergenceError, InvalidInputError
from .simulate import TripletBatch

__all__ = [
    "softplus",
    "loss",
    "gradient",
    "loss_and_gradient",
    "hessian_quadratic_form",
    "TrainConfig",
    "TrainTrace",
    "train",
]

TRACE_HEADER = ("iter", "loss", "grad_norm", "aligned_error", "wallclock_ms")


def softplus(z):
    """``log(1 + exp(z))`` without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z < 0, np.log1p(np.exp(np.minimum(z, 0.0))),
                    z + np.log1p(np.exp(-np.abs(z))))


class _Objective:
    """Index arrays of a batch bound to a feature matrix."""

    def __init__(self, batch: TripletBatch, features):
        if len(batch) == 0:
            raise InvalidInputError("triplet batch is empty")
        X = as_features(features)
        if batch.n != X.shape[0]:
            raise InvalidInputError(
                f"batch indexes {batch.n} individuals, features have {X.shape[0]}"
            )
        self.X = X
        self.n = X.shape[0]
        self.i, self.j, self.k = (np.ascontiguousarray(c) for c in batch.triplets.T)
        self.y = batch.y.astype(np.float64)
        self.m = len(batch)
        self._scatter_idx = np.concatenate([self.i, self.j, self.k])

    def _embed(self, A):
        A = as_factor(A, self.X.shape[1])
        Y = self.X @ A
        u = Y[self.i] - Y[self.j]
        v = Y[self.i] - Y[self.k]
        margins = np.einsum("ab,ab->a", u, u) - np.einsum("ab,ab->a", v, v)
        return A, u, v, margins

    def loss(self, A) -> float:
        _, _, _, margins = self._embed(A)
        return float(softplus(-self.y * margins).mean())

    def loss_and_grad(self, A):
        A, u, v, margins = self._embed(A)
        z = -self.y * margins
        value = float(softplus(z).mean())
        c = -self.y * expit(z) / self.m
        # row i gets c(u - v), row j gets -c u, row k gets +c v
        cu = c[:, None] * u
        cv = c[:, None] * v
        weights = np.concatenate([cu - cv, -cu, cv])
        R = np.empty((self.n, A.shape[1]))
        for col in range(A.shape[1]):
            R[:, col] = np.bincount(self._scatter_idx, weights=weights[:, col], minlength=self.n)
        return value, 2.0 * (self.X.T @ R)

    def hessian_terms(self, A, V):
        A, u, v, margins = self._embed(A)
        V = np.asarray(V, dtype=np.float64)
        if V.shape != A.shape:
            raise InvalidInputError(f"direction shape {V.shape} does not match factor {A.shape}")
        Z = self.X @ V
        a = Z[self.i] - Z[self.j]
        b = Z[self.i] - Z[self.k]
        cross = np.einsum("ab,ab->a", a, u) - np.einsum("ab,ab->a", b, v)
        curv = np.einsum("ab,ab->a", a, a) - np.einsum("ab,ab->a", b, b)
        ym = self.y * margins
        s_neg = expit(-ym)
        alpha1 = float(np.mean(-2.0 * self.y * s_neg * curv))
        alpha2 = float(np.mean(4.0 * expit(ym) * s_neg * cross**2))
        return alpha1, alpha2


def _objective(batch, features) -> _Objective:
    return _Objective(batch, features)


def loss(batch: TripletBatch, features, factor) -> float:
    """Mean logistic loss ``softplus(-y_t * margin_t)`` over the batch."""
    return _objective(batch, features).loss(factor)


def gradient(batch: TripletBatch, features, factor) -> np.ndarray:
    """Analytic gradient ``-(1/|S|) sum 2 y_t M_t A / (exp(y_t m_t) + 1)``."""
    return _objective(batch, features).loss_and_grad(factor)[1]


def loss_and_gradient(batch: TripletBatch, features, factor):
    return _objective(batch, features).loss_and_grad(factor)


def hessian_quadratic_form(batch: TripletBatch, features, factor, direction,
                           return_terms: bool = False):
    """``vec(V)^T H vec(V)`` for the loss Hessian ``H`` at ``factor``.

    The value splits into the curvature term of the margin,
    ``mean(-2 y_t Tr(V^T M_t V) / (exp(y_t m_t) + 1))``, and the Gauss-Newton
    term ``mean(4 exp(y_t m_t) Tr(V^T M_t A)^2 / (exp(y_t m_t) + 1)^2)``.
    With ``return_terms=True`` the pair ``(alpha1, alpha2)`` is returned
    instead of their sum.
    """
    a1, a2 = _objective(batch, features).hessian_terms(factor, direction)
    return (a1, a2) if return_terms else a1 + a2


@dataclass
class TrainConfig:
    eta: float = 0.1
    T: int = 200
    record_every: int = 1
    reference_factor: np.ndarray | None = None
    grad_tol: float | None = None
    record_wallclock: bool = True

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ConfigurationError(f"step size must be positive, got {self.eta}")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigurationError(f"iteration count must be >= 1, got {self.T}")
        if self.record_every < 1:
            raise ConfigurationError(f"record_every must be >= 1, got {self.record_every}")
        if self.grad_tol is not None and self.grad_tol < 0:
            raise ConfigurationError("grad_tol must be nonnegative")


@dataclass
class TrainTrace:
    """Per-iteration diagnostics; iteration ``w`` refers to the iterate ``A_w``."""

    iters: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    aligned_error: list = field(default_factory=list)
    wallclock_ms: list = field(default_factory=list)

    def append(self, w, value, gnorm, err=None, ms=None):
        self.iters.append(int(w))
        self.loss.append(float(value))
        self.grad_norm.append(float(gnorm))
        self.aligned_error.append(None if err is None else float(err))
        self.wallclock_ms.append(None if ms is None else float(ms))

    def __len__(self):
        return len(self.iters)

    def to_csv(self, path=None) -> str:
        """Serialise with 17 significant digits; empty cells for missing values."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        fmt = lambda v: "" if v is None else f"{v:.17g}"  # noqa: E731
        for row in zip(self.iters, self.loss, self.grad_norm, self.aligned_error, self.wallclock_ms):
            writer.writerow([row[0]] + [fmt(v) for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TrainTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_HEADER:
                raise InvalidInputError(f"unexpected trace header {header}")
            for row in reader:
                val = [None if c == "" else float(c) for c in row[1:]]
                trace.append(int(row[0]), *val)
        return trace


def train(batch: TripletBatch, features, init, config: TrainConfig | None = None):
    """Run exactly ``config.T`` steps ``A <- A - eta * grad L(A)``.

    Diagnostics are recorded at iteration 0, every ``record_every`` steps
    and at the last iterate. If ``reference_factor`` is set the
    Procrustes-aligned error to it is recorded too. ``grad_tol`` (off by
    default) allows stopping early once the gradient norm falls below it.

    Raises
    ------
    DivergenceError
        On the first non-finite loss or gradient; ``err.trace`` holds the
        trace so far.
    """
    cfg = config or TrainConfig()
    obj = _objective(batch, features)
    A = as_factor(init, obj.X.shape[1]).copy()
    ref = None
    if cfg.reference_factor is not None:
        ref = as_factor(cfg.reference_factor, obj.X.shape[1])
        if ref.shape != A.shape:
            raise InvalidInputError(f"reference shape {ref.shape} differs from init {A.shape}")
    trace = TrainTrace()
    start = time.perf_counter()
    for w in range(cfg.T + 1):
        # overflow is reported as DivergenceError below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            value, G = obj.loss_and_grad(A)
        gnorm = float(np.linalg.norm(G))
        if not (math.isfinite(value) and math.isfinite(gnorm)):
            raise DivergenceError(f"non-finite loss or gradient at iteration {w}", trace=trace)
        last = w == cfg.T or (cfg.grad_tol is not None and gnorm < cfg.grad_tol)
        if w % cfg.record_every == 0 or last:
            err = None if ref is None else procrustes_align(A, ref).aligned_error
            ms = (time.perf_counter() - start) * 1e3 if cfg.record_wallclock else None
            trace.append(w, value, gnorm, err, ms)
        if last:
            break
        A = A - cfg.eta * G
    return A, trace
