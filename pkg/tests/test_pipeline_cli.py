import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triplet_metric import pipeline
from triplet_metric.cli import main
from triplet_metric.exceptions import ConfigurationError, InitializationError
from triplet_metric.pipeline import RunConfig

SMALL = dict(n=24, p=4, r=2, s=0.5, T=15, distribution="gaussian-ar", threads=1)


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


class TestRunConfig:
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**64 - 1), p=st.integers(1, 30), s=st.floats(0, 1),
           eta=st.floats(1e-6, 10), sym=st.booleans(),
           dist=st.sampled_from(["gaussian-diagonal", "gaussian-ar", "bernoulli"]))
    def test_json_round_trip(self, seed, p, s, eta, sym, dist):
        cfg = RunConfig(seed=seed, p=p, r=1, s=s, eta=eta, symmetrize=sym, distribution=dist)
        assert RunConfig.from_json(cfg.to_json()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            RunConfig.from_dict({"seed": 1, "learning_rate": 0.1})

    @pytest.mark.parametrize("kw", [dict(r=0), dict(r=5, p=4), dict(s=1.5), dict(eta=0.0),
                                    dict(T=0), dict(distribution="cauchy"), dict(threads=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            RunConfig(**kw)

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv(pipeline.THREADS_ENV, "3")
        assert pipeline.resolve_threads(None) == 3
        assert pipeline.resolve_threads(2) == 2
        monkeypatch.setenv(pipeline.THREADS_ENV, "many")
        with pytest.raises(ConfigurationError):
            pipeline.resolve_threads(None)


class TestRunPipeline:
    def test_artifacts(self, tmp_path):
        log = pipeline.run_pipeline(RunConfig(**SMALL, output_dir=str(tmp_path / "run")))
        assert log["schema_version"] == 1
        for path in log["files"].values():
            assert Path(path).exists()
        assert Path(log["log_path"]).exists()
        on_disk = json.loads(Path(log["log_path"]).read_text())
        assert on_disk["config"]["n"] == 24
        lines = Path(log["trace_path"]).read_text().splitlines()
        assert lines[0] == "iter,loss,grad_norm,aligned_error,wallclock_ms"
        assert len(lines) == 1 + 16
        assert log["evaluation"]["aligned_error_final"] >= 0
        assert log["certification"]["l_hat"] == pytest.approx(1.0, abs=1e-9)

    def test_no_data_fails_in_init(self, tmp_path):
        with pytest.raises(InitializationError):
            pipeline.run_pipeline(RunConfig(**{**SMALL, "s": 0.0}, output_dir=str(tmp_path)))

    def test_deterministic_trace(self, tmp_path):
        a = pipeline.run_pipeline(RunConfig(**SMALL, output_dir=str(tmp_path / "a")))
        b = pipeline.run_pipeline(RunConfig(**SMALL, output_dir=str(tmp_path / "b")))
        assert Path(a["trace_path"]).read_bytes() == Path(b["trace_path"]).read_bytes()

    def test_csv_features_with_observed_triplets(self, tmp_path):
        first = pipeline.run_pipeline(RunConfig(**SMALL, output_dir=str(tmp_path / "sim")))
        raw = np.random.default_rng(0).standard_normal((24, 7))
        np.savetxt(tmp_path / "raw.csv", raw, delimiter=",", header="a,b,c,d,e,f,g", comments="")
        cfg = RunConfig(**SMALL, data=str(tmp_path / "raw.csv"), csv_header=True,
                        triplets=first["files"]["triplets"], output_dir=str(tmp_path / "real"))
        log = pipeline.run_pipeline(cfg)
        assert log["evaluation"] is None and log["certification"] is None
        X = np.loadtxt(log["files"]["features"], delimiter=",")
        assert X.shape == (24, 4)
        np.testing.assert_allclose(X.std(axis=0), 1.0, atol=1e-12)


class TestCLI:
    def test_step_by_step(self, tmp_path, capsys):
        d = tmp_path
        assert run_cli(["gen-data", "--n", 24, "--p", 4, "--distribution", "gaussian-ar",
                        "--out", d / "X.csv"], capsys)[0] == 0
        assert run_cli(["gen-metric", "--p", 4, "--r", 2, "--metric-out", d / "K.csv",
                        "--factor-out", d / "A.csv"], capsys)[0] == 0
        code, out, _ = run_cli(["sample-triplets", "--features", d / "X.csv", "--factor", d / "A.csv",
                                "--s", 0.5, "--out", d / "T.csv"], capsys)
        assert code == 0 and out["responses"]
        code, out, _ = run_cli(["init", "--features", d / "X.csv", "--triplets", d / "T.csv",
                                "--r", 2, "--out", d / "A0.csv", "--threads", 1], capsys)
        assert code == 0 and out["report"]["n_retained"] == 21
        code, out, _ = run_cli(["train", "--features", d / "X.csv", "--triplets", d / "T.csv",
                                "--init", d / "A0.csv", "--reference", d / "A.csv", "--T", 5,
                                "--out", d / "Ahat.csv", "--trace-out", d / "trace.csv",
                                "--threads", 1], capsys)
        assert code == 0 and out["final_aligned_error"] is not None
        A_hat = np.loadtxt(d / "Ahat.csv", delimiter=",", ndmin=2)
        X = np.loadtxt(d / "X.csv", delimiter=",")
        np.savetxt(d / "F.csv", X @ A_hat, delimiter=",")
        np.savetxt(d / "Khat.csv", A_hat @ A_hat.T, delimiter=",", fmt="%.17g")
        code, out, _ = run_cli(["audit", "--features", d / "X.csv", "--predictions", d / "F.csv",
                                "--metric", d / "Khat.csv"], capsys)
        assert code == 0 and out["l_max"] == pytest.approx(1.0, abs=1e-6)
        code, out, _ = run_cli(["certify", "--features", d / "X.csv", "--predictions", d / "F.csv",
                                "--metric-est", d / "Khat.csv", "--metric-true", d / "K.csv"], capsys)
        assert code == 0 and "bound" in out

    def test_simulate(self, tmp_path, capsys):
        code, out, _ = run_cli(["simulate", "--n", 10, "--p", 3, "--r", 1, "--s", 0.2,
                                "--output-dir", tmp_path], capsys)
        assert code == 0
        assert all(Path(p).exists() for p in out["files"].values())

    def test_sample_triplets_without_responses(self, tmp_path, capsys):
        code, out, _ = run_cli(["sample-triplets", "--n", 5, "--s", 1.0, "--out", tmp_path / "t.csv"], capsys)
        assert code == 0 and out["count"] == 60 and not out["responses"]

    def test_pipeline_and_config_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"T": 3, "output-dir": str(tmp_path / "o")}))
        code, out, _ = run_cli(["pipeline", "--n", 20, "--p", 3, "--r", 1, "--T", 50,
                                "--threads", 1, "--config", cfg], capsys)
        assert code == 0
        log = json.loads(Path(out["log"]).read_text())
        assert log["config"]["T"] == 3
        assert len(Path(log["trace_path"]).read_text().splitlines()) == 5

    def test_exit_code_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"learning_rate": 1}))
        code, _, err = run_cli(["pipeline", "--config", cfg], capsys)
        assert code == 2 and err["error"] == "ConfigurationError"
        code, _, err = run_cli(["pipeline", "--r", 0, "--output-dir", tmp_path], capsys)
        assert code == 2

    def test_exit_code_data(self, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("1,2\n3,x\n")
        code, _, err = run_cli(["pipeline", "--data", tmp_path / "bad.csv", "--p", 2, "--r", 1,
                                "--output-dir", tmp_path / "o"], capsys)
        assert code == 3
        assert "line 2, column 2" in err["message"]

    def test_exit_code_numerical(self, tmp_path, capsys):
        code, _, err = run_cli(["pipeline", "--n", 12, "--p", 3, "--r", 1, "--s", 0.0,
                                "--threads", 1, "--output-dir", tmp_path], capsys)
        assert code == 4 and err["error"] == "InitializationError"

    def test_argparse_errors_exit_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["pipeline", "--n", "many"])
        assert exc.value.code == 2

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "triplet_metric", "gen-metric", "--p", "3", "--r", "1",
                              "--metric-out", str(tmp_path / "K.csv"),
                              "--factor-out", str(tmp_path / "A.csv")],
                             capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        assert json.loads(res.stdout)["status"] == "ok"
