import json
import os

import numpy as np
import pytest

from srcal.cli import main
from test_harness import small_spec


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A spec file plus the artifacts of `srcal train`, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    spec = small_spec()
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(spec.to_json()))
    train_dir = root / "train"
    main(["train", "--spec", str(spec_path), "--out", str(train_dir)])
    return root, str(spec_path), str(train_dir)


def test_train_writes_model_and_splits(workspace):
    _, _, train_dir = workspace
    for name in ("model.json", "train.csv", "val.csv", "test.csv",
                 "spec.json"):
        assert os.path.exists(os.path.join(train_dir, name))


def test_evaluate_reports_metrics(workspace, tmp_path, capsys):
    _, _, train_dir = workspace
    out = tmp_path / "metrics.csv"
    main(["evaluate", "--model", os.path.join(train_dir, "model.json"),
          "--data", os.path.join(train_dir, "test.csv"),
          "--out", str(out),
          "--reliability-csv", str(tmp_path / "rel.csv")])
    captured = capsys.readouterr().out
    assert "ece:" in captured and "accuracy:" in captured
    header, row = out.read_text().strip().splitlines()
    assert header.split(",") == ["accuracy", "ece", "nll", "brier", "entropy"]
    assert len(row.split(",")) == 5
    assert (tmp_path / "rel.csv").exists()


def test_calibrate_then_evaluate_with_temperature(workspace, tmp_path, capsys):
    _, _, train_dir = workspace
    temp_path = tmp_path / "temp.json"
    main(["calibrate", "--model", os.path.join(train_dir, "model.json"),
          "--val-data", os.path.join(train_dir, "val.csv"),
          "--out", str(temp_path)])
    doc = json.loads(temp_path.read_text())
    assert doc["temperature"] > 0
    main(["evaluate", "--model", os.path.join(train_dir, "model.json"),
          "--data", os.path.join(train_dir, "test.csv"),
          "--temperature", str(doc["temperature"])])
    assert "nll:" in capsys.readouterr().out


def test_sleep_and_analyze_commands(workspace, tmp_path, capsys):
    _, _, train_dir = workspace
    cfg = {"Time Steps": 40, "dt": 0.001, "Decay Rate": 0.95,
           "Max Spiking Rate": 120.0, "Positive STDP": 1e-4,
           "Negative STDP": -3e-4, "Spiking Thresholds": [1.0, 1.0],
           "Seed": 0}
    cfg_path = tmp_path / "sleep.json"
    cfg_path.write_text(json.dumps(cfg))
    slept_path = tmp_path / "slept.json"
    main(["sleep", "--model", os.path.join(train_dir, "model.json"),
          "--data", os.path.join(train_dir, "train.csv"),
          "--config", str(cfg_path), "--seed", "3",
          "--out", str(slept_path)])
    assert slept_path.exists()
    capsys.readouterr()  # drain the sleep command's status line

    out_dir = tmp_path / "analysis"
    main(["analyze", "--before", os.path.join(train_dir, "model.json"),
          "--after", str(slept_path),
          "--data", os.path.join(train_dir, "test.csv"),
          "--out", str(out_dir)])
    for name in ("weight_diff.csv", "weight_diff.svg",
                 "confidence_transfer.csv", "confidence_transfer.svg"):
        assert (out_dir / name).exists()
    summary = json.loads(capsys.readouterr().out)
    assert "weight_diff" in summary


def test_tune_writes_config_and_log(workspace, tmp_path):
    _, _, train_dir = workspace
    out_dir = tmp_path / "tune"
    main(["tune", "--model", os.path.join(train_dir, "model.json"),
          "--train-data", os.path.join(train_dir, "train.csv"),
          "--val-data", os.path.join(train_dir, "val.csv"),
          "--seed", "1", "--population", "4", "--generations", "2",
          "--out", str(out_dir)])
    assert (out_dir / "sleep_config.json").exists()
    assert (out_dir / "ga_log.csv").exists()
    doc = json.loads((out_dir / "sleep_config.json").read_text())
    assert doc["Negative STDP"] <= 0


def test_run_all_and_report(workspace, tmp_path, capsys):
    _, spec_path, _ = workspace
    out_dir = tmp_path / "run"
    main(["run-all", "--spec", spec_path, "--out", str(out_dir)])
    for name in ("metrics.csv", "metrics_std.csv", "manifest.json",
                 "best_methods.json", "trial_metrics.csv"):
        assert (out_dir / name).exists()
    assert "trial rows" in capsys.readouterr().out

    report_dir = tmp_path / "report2"
    main(["report", "--manifest", str(out_dir / "manifest.json"),
          "--out", str(report_dir)])
    assert (report_dir / "metrics.csv").read_bytes() == \
        (out_dir / "metrics.csv").read_bytes()
