"""Command-line interface: train, sleep, tune, calibrate, evaluate, analyze,
report, run-all."""

import argparse
import json
import os

import numpy as np

from . import analysis
from .data import export_csv, ingest_csv, split_dataset
from .ga import GaConfig, decode, default_bounds, fitness_src, ga_search, \
    write_ga_log
from .harness import (ExperimentSpec, RunManifest, build_dataset, default_spec,
                      emit_report, run_experiment)
from .metrics import PredictionBatch, all_metrics, reliability_bins
from .network import (LossSpec, TrainConfig, build_network, load_network,
                      logits, save_network, softmax, train_sgd)
from .sleep import SleepConfig, compute_input_statistics, compute_layer_scales, \
    sleep
from .temperature import apply_temperature, fit_temperature


def _load_spec(args):
    spec = ExperimentSpec.load(args.spec) if args.spec else default_spec()
    if getattr(args, "seed", None) is not None:
        spec.base_seed = args.seed
        spec.seeds = None
    if getattr(args, "methods", None):
        spec.methods = args.methods.split(",")
    if getattr(args, "trials", None) is not None:
        spec.trials = args.trials
        spec.seeds = None
    if getattr(args, "bins", None) is not None:
        spec.bins = args.bins
    return spec


def _cmd_train(args):
    spec = _load_spec(args)
    os.makedirs(args.out, exist_ok=True)
    full = build_dataset(spec.dataset)
    train_d, val_d, test_d = split_dataset(
        full, spec.split.get("fractions", [0.6, 0.2, 0.2]),
        spec.split.get("seed", 0), spec.split.get("imagenet_protocol", False))
    for name, ds in (("train", train_d), ("val", val_d), ("test", test_d)):
        export_csv(ds, os.path.join(args.out, f"{name}.csv"))
    seed = spec.trial_seeds()[0]
    model = spec.model
    net = build_network(model["widths"], model["head_start"], seed,
                        bias=model.get("bias", True),
                        head_bias=model.get("head_bias", True))
    history = train_sgd(net, train_d, TrainConfig(seed=seed, **spec.train))
    save_network(net, os.path.join(args.out, "model.json"))
    with open(os.path.join(args.out, "spec.json"), "w") as fh:
        json.dump(spec.to_json(), fh, indent=2)
    print(f"trained {len(history)} epochs, "
          f"final train accuracy {history[-1]['accuracy']:.4f}")
    print(f"artifacts written to {args.out}")


def _ingest(path, class_count=None):
    return ingest_csv(path, class_count)


def _cmd_sleep(args):
    net = load_network(args.model)
    data = _ingest(args.data)
    cfg = SleepConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    slept = sleep(net, data, cfg)
    save_network(slept, args.out)
    print(f"slept model written to {args.out}")


def _cmd_tune(args):
    net = load_network(args.model)
    train_d = _ingest(args.train_data)
    val_d = _ingest(args.val_data)
    val_d.role = "val"
    os.makedirs(args.out, exist_ok=True)
    seed = args.seed if args.seed is not None else 1
    ga_cfg = GaConfig(seed=seed, population_size=args.population,
                      generations=args.generations)
    stats = compute_input_statistics(net, train_d)
    scales = compute_layer_scales(net, train_d)

    def fitness(genome):
        return fitness_src(genome, net, train_d, val_d, seed=seed,
                           ece_weight=args.ece_weight, bins=args.bins,
                           stats=stats, scales=scales)

    best, history = ga_search(fitness, default_bounds(len(net.head_layers)),
                              ga_cfg)
    cfg = decode(best, len(net.head_layers), seed=seed)
    cfg.save(os.path.join(args.out, "sleep_config.json"))
    write_ga_log(history, os.path.join(args.out, "ga_log.csv"))
    print(f"best fitness {history[-1]['best']:.6f}; "
          f"config written to {args.out}/sleep_config.json")


def _cmd_calibrate(args):
    net = load_network(args.model)
    val_d = _ingest(args.val_data)
    temp = fit_temperature(logits(net, val_d.features), val_d.labels)
    doc = {"temperature": temp.value, "fell_back": temp.fell_back,
           "converged": temp.converged}
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(f"fitted temperature {temp.value:.6f}"
          + (" (fell back to 1.0)" if temp.fell_back else ""))


def _cmd_evaluate(args):
    net = load_network(args.model)
    data = _ingest(args.data)
    z = logits(net, data.features)
    probs = apply_temperature(z, args.temperature) if args.temperature \
        else softmax(z)
    batch = PredictionBatch(probs, data.labels)
    results = all_metrics(batch, args.bins)
    for k, v in results.items():
        print(f"{k}: {v:.6f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(",".join(results) + "\n")
            fh.write(",".join(f"{v:.12g}" for v in results.values()) + "\n")
    if args.reliability_csv:
        reliability_bins(batch, args.bins).to_csv(args.reliability_csv)


def _cmd_analyze(args):
    before = load_network(args.before)
    after = load_network(args.after)
    data = _ingest(args.data)
    os.makedirs(args.out, exist_ok=True)
    hist, summary = analysis.weight_diff_hist(before, after)
    hist.to_csv(os.path.join(args.out, "weight_diff.csv"))
    analysis.plot_histogram1d(hist, os.path.join(args.out, "weight_diff.svg"),
                              title="head weight changes", xlabel="delta")
    base_batch = PredictionBatch(softmax(logits(before, data.features)),
                                 data.labels)
    after_batch = PredictionBatch(softmax(logits(after, data.features)),
                                  data.labels)
    transfer = analysis.confidence_transfer(base_batch, after_batch)
    transfer.to_csv(os.path.join(args.out, "confidence_transfer.csv"))
    analysis.plot_heatmap2d(transfer,
                            os.path.join(args.out, "confidence_transfer.svg"))
    for label, net in (("before", before), ("after", after)):
        analysis.feature_magnitude_hist(net, data).to_csv(
            os.path.join(args.out, f"feature_magnitude_{label}.csv"))
        analysis.sparsity_hist(net, data).to_csv(
            os.path.join(args.out, f"sparsity_{label}.csv"))
    print(json.dumps({"weight_diff": summary,
                      "above_diagonal": transfer.above_diagonal,
                      "on_diagonal": transfer.on_diagonal,
                      "below_diagonal": transfer.below_diagonal}, indent=2))


def _cmd_report(args):
    manifest = RunManifest.load(args.manifest)
    emit_report(manifest, args.out)
    print(f"report written to {args.out}")


def _cmd_run_all(args):
    spec = _load_spec(args)
    manifest, artifacts = run_experiment(spec, out_dir=args.out,
                                         threads=args.threads)
    emit_report(manifest, args.out, artifacts)
    print(f"{len(manifest.trial_rows)} trial rows; report in {args.out}")
    for m, agg in manifest.aggregates.items():
        print(f"{m}: " + ", ".join(f"{k}={v['mean']:.4f}"
                                   for k, v in agg.items()))
    if manifest.errors:
        print(f"WARNING: {len(manifest.errors)} trial(s) failed")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="srcal",
        description="sleep-replay calibration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="generate data, split, train a baseline")
    p.add_argument("--spec", help="experiment spec JSON (default: built-in)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sleep", help="run the replay phase on a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="training-split CSV")
    p.add_argument("--config", required=True, help="sleep config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sleep)

    p = sub.add_parser("tune", help="GA search for sleep hyperparameters")
    p.add_argument("--model", required=True)
    p.add_argument("--train-data", required=True)
    p.add_argument("--val-data", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--population", type=int, default=24)
    p.add_argument("--generations", type=int, default=15)
    p.add_argument("--ece-weight", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("calibrate", help="fit a temperature on validation data")
    p.add_argument("--model", required=True)
    p.add_argument("--val-data", required=True)
    p.add_argument("--out", required=True, help="temperature JSON path")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="metrics for a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--temperature", type=float)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--reliability-csv")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="representation analyses before/after")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("report", help="re-emit the report from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("run-all", help="full experiment: train, calibrate, report")
    p.add_argument("--spec", help="experiment spec JSON (default: built-in)")
    p.add_argument("--seed", type=int)
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--trials", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run_all)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
