"""End-to-end experiment runs: data, triplets, initialisation, descent,
evaluation and artifacts on disk."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import procrustes_align, metric_gap
from .descent import TrainConfig, train
from .exceptions import ConfigurationError, InvalidInputError
from .fairness import certify_transfer, isometric_predictor
from .io import ingest_csv, read_triplets_csv, write_matrix_csv, write_triplets_csv
from .preprocess import pca_standardize
from .simulate import (
    DISTRIBUTIONS,
    FeatureDistribution,
    TripletBatch,
    gen_features,
    gen_metric,
    sample_responses,
    sample_triplets,
)
from .spectral import SpectralOptions, spectral_init

__all__ = ["RunConfig", "run_pipeline", "resolve_threads", "SCHEMA_VERSION"]

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
THREADS_ENV = "TRIPLET_METRIC_THREADS"


@dataclass
class RunConfig:
    """Everything needed to reproduce one run.

    ``data`` is ``"synthetic"`` or the path of a numeric CSV (reduced to its
    top ``p`` standardised principal components). ``triplets`` optionally
    points to observed ``i,j,k,y`` responses; without it a random rank-``r``
    ground truth is drawn and responses are simulated from it.
    """

    seed: int = 0
    data: str = "synthetic"
    csv_header: bool = False
    triplets: str | None = None
    distribution: str = "gaussian-diagonal"
    chi: float = 5.0
    rho: float = 0.8
    n: int = 120
    p: int = 20
    r: int = 3
    s: float = 0.5
    eta: float = 0.1
    T: int = 200
    record_every: int = 1
    discard_fraction: float = 0.1
    pi_floor: float = 1e-12
    symmetrize: bool = False
    pair_cap: int = 2_000_000
    threads: int | None = None
    output_dir: str = "run"

    def __post_init__(self):
        checks = [
            (isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be a 64-bit unsigned int"),
            (self.distribution in DISTRIBUTIONS, f"distribution must be one of {DISTRIBUTIONS}"),
            (self.n >= 3, "n must be >= 3"),
            (1 <= self.r <= self.p, "need 1 <= r <= p"),
            (0.0 <= self.s <= 1.0, "s must lie in [0, 1]"),
            (self.eta > 0, "eta must be positive"),
            (self.T >= 1, "T must be >= 1"),
            (self.record_every >= 1, "record_every must be >= 1"),
            (0.0 <= self.discard_fraction < 1.0, "discard_fraction must lie in [0, 1)"),
            (self.pi_floor > 0, "pi_floor must be positive"),
            (self.pair_cap >= 1, "pair_cap must be >= 1"),
            (self.threads is None or self.threads >= 1, "threads must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigurationError(msg)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid config JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigurationError("config JSON must be an object")
        return cls.from_dict(d)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigurationError("threads must be >= 1")
    return threads


def _load_features(cfg: RunConfig) -> np.ndarray:
    if cfg.data == "synthetic":
        dist = FeatureDistribution(cfg.distribution, cfg.p, cfg.seed, cfg.chi, cfg.rho)
        return gen_features(dist, cfg.n)
    raw = ingest_csv(cfg.data, has_header=cfg.csv_header)
    return pca_standardize(raw, cfg.p)


def run_pipeline(config: RunConfig) -> dict:
    """Execute one run and return its log (also written as ``run_log.json``).

    With ``threads == 1`` the trace CSV omits wall-clock values so repeated
    runs produce byte-identical files; timings are always kept in the log.
    """
    cfg = config
    threads = resolve_threads(cfg.threads)
    deterministic = threads == 1
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    files = {}

    def save_matrix(name, M):
        path = out / f"{name}.csv"
        write_matrix_csv(path, M)
        files[name] = str(path)

    X = _load_features(cfg)
    n, p = X.shape
    save_matrix("features", X)

    A_star = K_star = None
    if cfg.triplets is None:
        K_star, A_star = gen_metric(p, cfg.r, cfg.seed)
        T = sample_triplets(n, cfg.s, cfg.seed)
        batch = sample_responses(X, A_star, T, cfg.seed, sampling_rate=cfg.s)
        save_matrix("metric_true", K_star)
        save_matrix("factor_true", A_star)
    else:
        batch = read_triplets_csv(cfg.triplets, n=n)
        if not isinstance(batch, TripletBatch):
            raise InvalidInputError(f"{cfg.triplets}: triplet file has no responses")
    path = out / "triplets.csv"
    write_triplets_csv(path, batch)
    files["triplets"] = str(path)
    logger.info("%d individuals, %d features, %d triplets", n, p, len(batch))

    t0 = time.perf_counter()
    opts = SpectralOptions(
        discard_fraction=cfg.discard_fraction,
        pi_floor=cfg.pi_floor,
        symmetrize=cfg.symmetrize,
        threads=threads,
    )
    A0, report = spectral_init(batch, X, cfg.r, opts)
    init_ms = (time.perf_counter() - t0) * 1e3
    save_matrix("factor_init", A0)

    t0 = time.perf_counter()
    tcfg = TrainConfig(
        eta=cfg.eta,
        T=cfg.T,
        record_every=cfg.record_every,
        reference_factor=A_star,
        record_wallclock=not deterministic,
    )
    A_hat, trace = train(batch, X, A0, tcfg)
    train_ms = (time.perf_counter() - t0) * 1e3
    path = out / "trace.csv"
    trace.to_csv(path)
    files["trace"] = str(path)
    save_matrix("factor_final", A_hat)
    K_hat = A_hat @ A_hat.T
    save_matrix("metric_final", K_hat)

    evaluation = None
    certification = None
    if A_star is not None:
        evaluation = {
            "aligned_error_init": procrustes_align(A0, A_star).aligned_error,
            "aligned_error_final": procrustes_align(A_hat, A_star).aligned_error,
            "factor_norm_true": float(np.linalg.norm(A_star)),
            "metric_gap_spectral": metric_gap(K_hat, K_star),
            "metric_gap_fro": metric_gap(K_hat, K_star, norm="fro"),
        }
        rec = certify_transfer(isometric_predictor(X, A_hat), X, K_hat, K_star,
                               pair_cap=cfg.pair_cap, seed=cfg.seed)
        certification = rec.to_dict()

    log = {
        "schema_version": SCHEMA_VERSION,
        "status": "ok",
        "software_version": __version__,
        "config": cfg.to_dict(),
        "threads": threads,
        "deterministic": deterministic,
        "n_triplets": len(batch),
        "init_report": report.to_dict(),
        "trace_path": files["trace"],
        "final_metric_path": files["metric_final"],
        "final_loss": trace.loss[-1],
        "evaluation": evaluation,
        "certification": certification,
        "files": files,
        "timings_ms": {
            "init": init_ms,
            "train": train_ms,
            "total": (time.perf_counter() - t_start) * 1e3,
        },
    }
    log_path = out / "run_log.json"
    log["log_path"] = str(log_path)
    log_path.write_text(json.dumps(_jsonable(log), indent=2))
    return log


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj
