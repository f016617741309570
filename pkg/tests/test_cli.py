"""CLI surface tests: the run command and the offline seal-and-decode path."""

import random

import pytest

from nebula import wire
from nebula.cli import main
from nebula.params import params_from_config
from nebula.service import SubmissionLog


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "out"
    rc = main(
        [
            "run",
            "--dataset", "synthetic:zipf,n=2000,domain=25,skew=1.1,seed=4",
            "--eps", "1.0",
            "--delta", "1e-8",
            "--alpha", "0.1666666",
            "--tau-override", "5",
            "--shift-override", "4",
            "--seed", "3",
            "--out", str(out),
            "--baselines",
        ]
    )
    assert rc == 0
    for name in ("params.cfg", "report.csv", "errors.csv", "plotdata.csv"):
        assert (out / name).exists(), name
    params = params_from_config((out / "params.cfg").read_text())
    assert params.threshold == 5
    assert params.overridden == ("threshold", "tsdlap_shift")
    errors = (out / "errors.csv").read_text()
    assert "nebula" in errors and "central" in errors and "local" in errors


def test_run_multidim_with_bench(tmp_path):
    out = tmp_path / "out"
    rc = main(
        [
            "run",
            "--dataset", "synthetic:chain,n=1500,branching=3x3,skew=1.2,seed=2",
            "--eps", "1.0",
            "--tau-override", "4",
            "--shift-override", "4",
            "--multidim",
            "--seed", "1",
            "--out", str(out),
            "--bench",
        ]
    )
    assert rc == 0
    assert (out / "bench.csv").exists()
    plot = (out / "plotdata.csv").read_text()
    assert "prefix_error" in plot
    report = (out / "report.csv").read_text()
    assert report.startswith("nebula-layered-report,v1")


def test_offline_seal_and_decode(tmp_path):
    # Prepare a log without a daemon, then decode it via the CLI flag.
    from nebula import oprf
    from nebula.encode import build_submission
    from nebula.harness import value_randomness
    from nebula.params import DpBudget, derive_params, params_to_config

    params = derive_params(
        DpBudget(1.0, 1e-8, 1.0, 1e-8, 1 / 6),
        overrides={"threshold": 3, "tsdlap_shift": 4},
    )
    cfg = tmp_path / "params.cfg"
    cfg.write_text(params_to_config(params))
    log_path = tmp_path / "log.bin"
    log = SubmissionLog(log_path)
    kp = oprf.keygen(b"\x51" * 32)
    rng = random.Random(0)
    r = value_randomness(b"cli-value", kp)
    for _ in range(4):
        log.append(
            wire.MSG_SUBMISSION, build_submission(b"cli-value", r, params, rng).to_bytes()
        )
    log.close()
    rc = main(
        [
            "aggregation-server",
            "--log", str(log_path),
            "--params", str(cfg),
            "--report", str(tmp_path / "report.csv"),
            "--seal-and-decode",
        ]
    )
    assert rc == 0
    text = (tmp_path / "report.csv").read_text()
    assert "cli-value,4" in text


def test_bad_geo_columns_rejected(tmp_path):
    rc = main(
        [
            "run",
            "--dataset", "x.csv",
            "--geo-columns", "a,b",
            "--eps", "1.0",
            "--seed", "0",
            "--out", str(tmp_path),
        ]
    )
    assert rc == 2
