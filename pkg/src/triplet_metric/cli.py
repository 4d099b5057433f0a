"""Command-line interface.

Each subcommand reads and writes the plain CSV formats of :mod:`.io`,
prints a JSON summary on stdout and exits 0. Failures print a JSON error
record on stderr and exit 2 (configuration), 3 (data) or 4 (numerical).
Flags mirror configuration field names in kebab-case; ``--config FILE``
loads a JSON object whose keys (snake or kebab case) override the flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .descent import TrainConfig, train
from .exceptions import ConfigurationError, InvalidInputError, TripletMetricError
from .fairness import PredictionSet, audit, certify_transfer
from .io import (
    ingest_csv,
    read_matrix_csv,
    read_triplets_csv,
    write_matrix_csv,
    write_triplets_csv,
)
from .pipeline import RunConfig, _jsonable, resolve_threads, run_pipeline
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

__all__ = ["main", "build_parser"]

_DEFAULTS = RunConfig()


def _flag(parser, name, **kw):
    parser.add_argument("--" + name.replace("_", "-"), dest=name, **kw)


def _bool(text):
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_common(sp):
    sp.add_argument("--config", dest="config", default=None, help="JSON file overriding flags")
    _flag(sp, "threads", type=int, default=None,
          help="worker threads (default: TRIPLET_METRIC_THREADS or CPU count)")
    sp.add_argument("-v", "--verbose", action="store_true")


def _add_features_gen(sp):
    _flag(sp, "seed", type=int, default=_DEFAULTS.seed)
    _flag(sp, "distribution", choices=DISTRIBUTIONS, default=_DEFAULTS.distribution)
    _flag(sp, "chi", type=float, default=_DEFAULTS.chi)
    _flag(sp, "rho", type=float, default=_DEFAULTS.rho)
    _flag(sp, "n", type=int, default=_DEFAULTS.n)
    _flag(sp, "p", type=int, default=_DEFAULTS.p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triplet-metric",
        description="Learn a low-rank Mahalanobis metric from triplet comparisons "
                    "and audit individual fairness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-data", help="draw synthetic features")
    _add_features_gen(sp)
    _flag(sp, "out", default="features.csv")
    _add_common(sp)

    sp = sub.add_parser("gen-metric", help="draw a random rank-r ground-truth metric")
    _flag(sp, "seed", type=int, default=_DEFAULTS.seed)
    _flag(sp, "p", type=int, default=_DEFAULTS.p)
    _flag(sp, "r", type=int, default=_DEFAULTS.r)
    _flag(sp, "metric_out", default="metric_true.csv")
    _flag(sp, "factor_out", default="factor_true.csv")
    _add_common(sp)

    sp = sub.add_parser("sample-triplets",
                        help="sample triplets, with simulated responses when --factor is given")
    _flag(sp, "seed", type=int, default=_DEFAULTS.seed)
    _flag(sp, "n", type=int, default=None, help="number of individuals (default: rows of --features)")
    _flag(sp, "s", type=float, default=_DEFAULTS.s)
    _flag(sp, "features", default=None)
    _flag(sp, "factor", default=None)
    _flag(sp, "out", default="triplets.csv")
    _add_common(sp)

    sp = sub.add_parser("simulate", help="features, ground truth and responses in one go")
    _add_features_gen(sp)
    _flag(sp, "r", type=int, default=_DEFAULTS.r)
    _flag(sp, "s", type=float, default=_DEFAULTS.s)
    _flag(sp, "output_dir", default="sim")
    _add_common(sp)

    sp = sub.add_parser("init", help="spectral initialisation from responses")
    _flag(sp, "features", required=True)
    _flag(sp, "triplets", required=True)
    _flag(sp, "r", type=int, default=_DEFAULTS.r)
    _flag(sp, "discard_fraction", type=float, default=_DEFAULTS.discard_fraction)
    _flag(sp, "pi_floor", type=float, default=_DEFAULTS.pi_floor)
    _flag(sp, "symmetrize", type=_bool, nargs="?", const=True, default=False)
    _flag(sp, "out", default="factor_init.csv")
    _flag(sp, "report_out", default=None)
    _add_common(sp)

    sp = sub.add_parser("train", help="gradient descent from an initial factor")
    _flag(sp, "features", required=True)
    _flag(sp, "triplets", required=True)
    _flag(sp, "init", required=True)
    _flag(sp, "reference", default=None, help="true factor for aligned-error tracking")
    _flag(sp, "eta", type=float, default=_DEFAULTS.eta)
    _flag(sp, "T", type=int, default=_DEFAULTS.T)
    _flag(sp, "record_every", type=int, default=_DEFAULTS.record_every)
    _flag(sp, "out", default="factor_final.csv")
    _flag(sp, "trace_out", default="trace.csv")
    _add_common(sp)

    sp = sub.add_parser("audit", help="audit predictions against a metric")
    _flag(sp, "features", required=True)
    _flag(sp, "predictions", required=True)
    _flag(sp, "metric", required=True)
    _flag(sp, "outcome_metric", choices=("absolute", "euclidean"), default=None)
    _flag(sp, "pair_cap", type=int, default=_DEFAULTS.pair_cap)
    _flag(sp, "seed", type=int, default=_DEFAULTS.seed)
    _add_common(sp)

    sp = sub.add_parser("certify", help="check fairness transfer from an estimated to the true metric")
    _flag(sp, "features", required=True)
    _flag(sp, "predictions", required=True)
    _flag(sp, "metric_est", required=True)
    _flag(sp, "metric_true", required=True)
    _flag(sp, "outcome_metric", choices=("absolute", "euclidean"), default=None)
    _flag(sp, "pair_cap", type=int, default=_DEFAULTS.pair_cap)
    _flag(sp, "seed", type=int, default=_DEFAULTS.seed)
    _add_common(sp)

    sp = sub.add_parser("pipeline", help="run the full experiment and write all artifacts")
    for f, default in _DEFAULTS.to_dict().items():
        if f == "threads":
            continue
        if isinstance(default, bool):
            _flag(sp, f, type=_bool, nargs="?", const=True, default=default)
        elif f == "triplets":
            _flag(sp, f, default=None)
        else:
            _flag(sp, f, type=type(default), default=default)
    _add_common(sp)
    return parser


_RESERVED = {"command", "config", "verbose"}


def _apply_config(args, parser):
    if args.config is None:
        return args
    try:
        data = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {args.config} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{args.config}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{args.config}: config must be a JSON object")
    known = set(vars(args)) - _RESERVED
    for key, value in data.items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigurationError(f"unknown config key {key!r} for {args.command}")
        setattr(args, name, value)
    return args


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2))


def _load_batch(path, n):
    batch = read_triplets_csv(path, n=n)
    if not isinstance(batch, TripletBatch):
        raise InvalidInputError(f"{path}: responses column 'y' is required")
    return batch


def _cmd_gen_data(a):
    X = gen_features(FeatureDistribution(a.distribution, a.p, a.seed, a.chi, a.rho), a.n)
    write_matrix_csv(a.out, X)
    return {"features": a.out, "n": X.shape[0], "p": X.shape[1]}


def _cmd_gen_metric(a):
    K, A = gen_metric(a.p, a.r, a.seed)
    write_matrix_csv(a.metric_out, K)
    write_matrix_csv(a.factor_out, A)
    return {"metric": a.metric_out, "factor": a.factor_out}


def _cmd_sample_triplets(a):
    X = ingest_csv(a.features) if a.features else None
    n = a.n if a.n is not None else (X.shape[0] if X is not None else None)
    if n is None:
        raise ConfigurationError("give --n or --features")
    if X is not None and X.shape[0] != n:
        raise ConfigurationError(f"--n {n} disagrees with {X.shape[0]} feature rows")
    T = sample_triplets(n, a.s, a.seed)
    if a.factor is None:
        write_triplets_csv(a.out, T)
        return {"triplets": a.out, "count": int(T.shape[0]), "responses": False}
    if X is None:
        raise ConfigurationError("--factor needs --features to simulate responses")
    batch = sample_responses(X, read_matrix_csv(a.factor), T, a.seed, sampling_rate=a.s)
    write_triplets_csv(a.out, batch)
    return {"triplets": a.out, "count": len(batch), "responses": True}


def _cmd_simulate(a):
    out = Path(a.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    X = gen_features(FeatureDistribution(a.distribution, a.p, a.seed, a.chi, a.rho), a.n)
    K, A = gen_metric(a.p, a.r, a.seed)
    batch = sample_responses(X, A, sample_triplets(a.n, a.s, a.seed), a.seed, sampling_rate=a.s)
    files = {
        "features": out / "features.csv",
        "metric_true": out / "metric_true.csv",
        "factor_true": out / "factor_true.csv",
        "triplets": out / "triplets.csv",
    }
    write_matrix_csv(files["features"], X)
    write_matrix_csv(files["metric_true"], K)
    write_matrix_csv(files["factor_true"], A)
    write_triplets_csv(files["triplets"], batch)
    return {"files": {k: str(v) for k, v in files.items()}, "count": len(batch)}


def _cmd_init(a):
    X = ingest_csv(a.features)
    batch = _load_batch(a.triplets, X.shape[0])
    opts = SpectralOptions(discard_fraction=a.discard_fraction, pi_floor=a.pi_floor,
                           symmetrize=bool(a.symmetrize), threads=resolve_threads(a.threads))
    A0, report = spectral_init(batch, X, a.r, opts)
    write_matrix_csv(a.out, A0)
    result = {"factor": a.out, "report": report.to_dict()}
    if a.report_out:
        _write_json(a.report_out, report.to_dict())
    return result


def _cmd_train(a):
    X = ingest_csv(a.features)
    batch = _load_batch(a.triplets, X.shape[0])
    ref = read_matrix_csv(a.reference) if a.reference else None
    deterministic = resolve_threads(a.threads) == 1
    cfg = TrainConfig(eta=a.eta, T=a.T, record_every=a.record_every, reference_factor=ref,
                      record_wallclock=not deterministic)
    A, trace = train(batch, X, read_matrix_csv(a.init), cfg)
    write_matrix_csv(a.out, A)
    trace.to_csv(a.trace_out)
    return {"factor": a.out, "trace": a.trace_out, "final_loss": trace.loss[-1],
            "final_grad_norm": trace.grad_norm[-1], "final_aligned_error": trace.aligned_error[-1]}


def _predictions(path, outcome_metric):
    out = read_matrix_csv(path)
    if out.shape[1] == 1:
        out = out[:, 0]
    return PredictionSet(out, outcome_metric)


def _cmd_audit(a):
    rep = audit(_predictions(a.predictions, a.outcome_metric), ingest_csv(a.features),
                read_matrix_csv(a.metric), pair_cap=a.pair_cap, seed=a.seed)
    return rep.to_dict()


def _cmd_certify(a):
    rec = certify_transfer(_predictions(a.predictions, a.outcome_metric), ingest_csv(a.features),
                           read_matrix_csv(a.metric_est), read_matrix_csv(a.metric_true),
                           pair_cap=a.pair_cap, seed=a.seed)
    return rec.to_dict()


def _cmd_pipeline(a):
    fields = set(_DEFAULTS.to_dict())
    cfg = RunConfig.from_dict({k: v for k, v in vars(a).items() if k in fields})
    log = run_pipeline(cfg)
    return {"log": log["log_path"], "evaluation": log["evaluation"],
            "certification_holds": (log["certification"] or {}).get("holds")}


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "gen-metric": _cmd_gen_metric,
    "sample-triplets": _cmd_sample_triplets,
    "simulate": _cmd_simulate,
    "init": _cmd_init,
    "train": _cmd_train,
    "audit": _cmd_audit,
    "certify": _cmd_certify,
    "pipeline": _cmd_pipeline,
}


def _error_record(exc, code):
    rec = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    comp = getattr(exc, "component", None)
    if comp is not None:
        rec["component"] = [int(c) for c in np.atleast_1d(comp)]
    return rec


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config(args, parser)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore" if not args.verbose else "default", RuntimeWarning)
            result = _COMMANDS[args.command](args)
    except TripletMetricError as exc:
        record = _error_record(exc, exc.exit_code)
    except (TypeError, ValueError) as exc:
        # bad value types smuggled in through --config
        record = _error_record(ConfigurationError(str(exc)), 2)
    except OSError as exc:
        record = _error_record(exc, 3)
    else:
        print(json.dumps(_jsonable({"status": "ok", "command": args.command, **result}), indent=2))
        return 0
    print(json.dumps(record), file=sys.stderr)
    return record["exit_code"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
