import json
import os

import numpy as np
import pytest

from srcal.data import ConfigError
from srcal.harness import (ExperimentSpec, RunManifest, build_dataset,
                           default_spec, emit_report, run_experiment,
                           run_trial, train_baseline)


def small_spec(**overrides):
    """A spec small enough for unit tests: tiny data, tiny GA, 2 trials."""
    spec = default_spec(trials=2)
    spec.dataset = {"type": "synthetic", "classes": 3, "dim": 6,
                    "samples": 600, "separation": 0.8, "cluster_std": 1.0,
                    "seed": 5, "label_noise": 0.1}
    spec.model = {"widths": [6, 10, 8, 3], "head_start": 1, "bias": True,
                  "head_bias": False}
    spec.train = {"learning_rate": 0.02, "momentum": 0.9, "l2": 0.0,
                  "batch_size": 32, "epochs": 4, "lr_decay": 0.9,
                  "decay_every": 10}
    spec.baseline_seed = 3
    spec.ga = {"population_size": 6, "generations": 2, "elite_count": 1,
               "fitness": "nll-margin", "restarts": 1,
               "bounds": [[20, 60], [0.9, 0.99], [50, 200], [1e-5, 2e-4],
                          [1e-4, 1e-3], [0.1, 5.0], [0.1, 5.0]],
               "valve_scales": [1.0, 0.5], "valve_margin": 0.05}
    for k, v in overrides.items():
        setattr(spec, k, v)
    return spec


def test_spec_validation_and_round_trip():
    spec = default_spec()
    doc = spec.to_json()
    again = ExperimentSpec.from_json(json.loads(json.dumps(doc)))
    assert again.to_json() == doc
    with pytest.raises(ConfigError):
        ExperimentSpec.from_json({**doc, "methods": ["baseline", "nope"]})
    bad_split = {**doc, "split": {"fractions": [0.5, 0.5, 0.5]}}
    with pytest.raises(ConfigError):
        ExperimentSpec.from_json(bad_split)


def test_trial_seeds_are_distinct_and_overridable():
    spec = default_spec(trials=10)
    seeds = spec.trial_seeds()
    assert len(set(seeds)) == 10
    spec.seeds = list(range(10))
    assert spec.trial_seeds() == list(range(10))
    spec.seeds = [1, 2]
    with pytest.raises(ConfigError):
        spec.trial_seeds()


def test_build_dataset_kinds(tmp_path):
    ds = build_dataset({"type": "synthetic", "classes": 3, "dim": 4,
                        "samples": 50, "separation": 0.5, "cluster_std": 1.0,
                        "seed": 1})
    assert ds.n == 50
    with pytest.raises(ConfigError):
        build_dataset({"type": "mystery"})


def test_experiment_produces_all_methods_and_aggregates():
    spec = small_spec(methods=["baseline", "src", "ts", "src+ts", "ls",
                               "focal"])
    manifest, artifacts = run_experiment(spec)
    assert manifest.errors == []
    methods = {r["method"] for r in manifest.trial_rows}
    assert methods == set(spec.methods)
    assert len(manifest.trial_rows) == len(spec.methods) * spec.trials
    for m in spec.methods:
        agg = manifest.aggregates[m]
        for metric in ("accuracy", "ece", "nll", "brier", "entropy"):
            assert np.isfinite(agg[metric]["mean"])
            assert agg[metric]["std"] >= 0
    assert len(manifest.temperatures["ts"]) == spec.trials
    assert len(manifest.sleep_configs) == spec.trials
    assert all(doc is not None for doc in manifest.sleep_configs)
    # analysis summaries carry the per-trial transfer masses and weight stats
    for summary in manifest.analysis_summaries:
        assert "weight_diff" in summary
        assert {"above_diagonal", "on_diagonal",
                "below_diagonal"} <= set(summary["src"])


def test_shared_baseline_reuses_one_network():
    spec = small_spec(methods=["baseline"])
    manifest, _ = run_experiment(spec)
    accs = [r["accuracy"] for r in manifest.trial_rows]
    # same trained model evaluated on the same test split in every trial
    assert len(set(accs)) == 1

    spec2 = small_spec(methods=["baseline"], baseline_seed=None)
    manifest2, _ = run_experiment(spec2)
    accs2 = [r["accuracy"] for r in manifest2.trial_rows]
    assert len(set(accs2)) == 2  # per-trial training differs


def test_pinned_sleep_config_skips_tuning():
    spec = small_spec(methods=["baseline", "src"])
    spec.sleep_config = {"Time Steps": 30, "dt": 0.001, "Decay Rate": 0.95,
                         "Max Spiking Rate": 120.0, "Positive STDP": 1e-4,
                         "Negative STDP": -2e-4,
                         "Spiking Thresholds": [1.0, 1.0], "Seed": 0}
    manifest, _ = run_experiment(spec)
    assert manifest.errors == []
    for doc, seed in zip(manifest.sleep_configs, spec.trial_seeds()):
        assert doc["Time Steps"] == 30
        assert doc["Seed"] == seed  # reseeded per trial


def test_pinned_temperature_skips_fitting():
    spec = small_spec(methods=["baseline", "ts"], temperature=1.7)
    manifest, _ = run_experiment(spec)
    assert manifest.temperatures["ts"] == [1.7, 1.7]


def test_run_trial_failures_are_recorded_not_raised():
    spec = small_spec(methods=["baseline", "src"])
    spec.ga["bounds"] = [[20, 60]]  # wrong gene count -> decode fails
    manifest, _ = run_experiment(spec)
    assert len(manifest.errors) == spec.trials
    assert manifest.trial_rows == []


def test_threaded_run_matches_serial():
    spec = small_spec(methods=["baseline", "ts"])
    serial, _ = run_experiment(spec, threads=1)
    threaded, _ = run_experiment(spec, threads=2)
    assert serial.trial_rows == threaded.trial_rows
    assert serial.aggregates == threaded.aggregates


def test_manifest_round_trip(tmp_path):
    spec = small_spec(methods=["baseline", "ts"])
    manifest, _ = run_experiment(spec)
    path = tmp_path / "manifest.json"
    manifest.save(str(path))
    again = RunManifest.load(str(path))
    assert again.to_json() == manifest.to_json()


def test_emit_report_writes_the_bundle(tmp_path):
    spec = small_spec(methods=["baseline", "src", "ts", "ls"])
    manifest, artifacts = run_experiment(spec)
    out = tmp_path / "report"
    emit_report(manifest, str(out), artifacts)
    expected = [
        "metrics.csv", "metrics_std.csv", "best_methods.json",
        "trial_metrics.csv", "manifest.json", "reliability_baseline.csv",
        "reliability_src.svg", "confidence_transfer_src.csv",
        "confidence_transfer_src.svg", "feature_magnitude_baseline.csv",
        "feature_magnitude.svg", "sparsity.svg", "weight_diff_src.csv",
        "weight_diff_src.svg",
    ]
    for name in expected:
        assert (out / name).exists(), name
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "method,accuracy,ece,nll,brier,entropy"
    flags = json.loads((out / "best_methods.json").read_text())
    assert "post_hoc" in flags and "overall" in flags


def test_repeat_runs_are_byte_identical(tmp_path):
    spec = small_spec(methods=["baseline", "src", "ts"])
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        manifest, artifacts = run_experiment(spec)
        emit_report(manifest, str(out), artifacts)
    for name in ("metrics.csv", "metrics_std.csv", "trial_metrics.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_train_baseline_is_deterministic():
    spec = small_spec()
    data = build_dataset(spec.dataset)
    from srcal.data import split_dataset
    tr, _, _ = split_dataset(data, spec.split["fractions"], spec.split["seed"])
    a, _ = train_baseline(spec, tr, 3)
    b, _ = train_baseline(spec, tr, 3)
    assert a.weights_hash() == b.weights_hash()
