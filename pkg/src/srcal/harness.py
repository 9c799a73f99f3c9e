"""Experiment orchestration: dataset -> splits -> baseline training -> calibration
methods -> metrics -> aggregation -> report bundle."""

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .data import (ConfigError, generate_synthetic, ingest_csv, ingest_idx,
                   require_fit_split, split_dataset)
from .ga import (GaConfig, decode, default_bounds, fitness_src, ga_search,
                 write_ga_log)
from .metrics import PredictionBatch, all_metrics, reliability_bins
from .network import (LossSpec, TrainConfig, build_network, logits, softmax,
                      train_sgd)
from .sleep import (SleepConfig, compute_input_statistics, compute_layer_scales,
                    sleep)
from .temperature import Temperature, apply_temperature, fit_temperature

METRIC_NAMES = ("accuracy", "ece", "nll", "brier", "entropy")
# higher is better for accuracy and entropy, lower for the rest
METRIC_HIGHER_BETTER = {"accuracy": True, "ece": False, "nll": False,
                        "brier": False, "entropy": True}
POST_HOC_METHODS = ("baseline", "src", "ts", "src+ts")
KNOWN_METHODS = ("baseline", "src", "ts", "src+ts", "ls", "focal")


@dataclass
class ExperimentSpec:
    dataset: dict
    split: dict
    model: dict
    train: dict
    methods: list
    trials: int = 10
    base_seed: int = 1
    seeds: list = None
    baseline_seed: int = None  # train the baseline once with this seed and
                               # share it; trial seeds then drive only the
                               # calibration methods' randomness
    ga: dict = field(default_factory=dict)
    sleep_config: dict = None   # pinned SleepConfig JSON doc; skips GA tuning
    temperature: float = None   # pinned T; skips fitting
    bins: int = 15

    def __post_init__(self):
        fr = self.split.get("fractions", [0.6, 0.2, 0.2])
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise ConfigError(f"unknown method {m!r}")

    def trial_seeds(self):
        if self.seeds:
            if len(self.seeds) != self.trials:
                raise ConfigError("seed list length must equal trial count")
            return list(self.seeds)
        return [self.base_seed + 1000 * t for t in range(self.trials)]

    def to_json(self):
        return {
            "dataset": self.dataset, "split": self.split, "model": self.model,
            "train": self.train, "methods": list(self.methods),
            "trials": self.trials, "base_seed": self.base_seed,
            "seeds": self.seeds, "baseline_seed": self.baseline_seed,
            "ga": self.ga,
            "sleep_config": self.sleep_config,
            "temperature": self.temperature, "bins": self.bins,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# Replay genomes that already soften confidence well on the default model
# family; seeding the search population with them lets short GA runs start
# from softening regimes instead of rediscovering them from scratch.
DEFAULT_WARM_STARTS = (
    (350.0, 0.95, 100.0, 1e-5, 1e-4, 2.0, 2.0, 2.0),
    (200.0, 0.95, 100.0, 1e-5, 2e-4, 2.0, 2.0, 2.0),
    (500.0, 0.95, 100.0, 1e-5, 1e-4, 0.5, 0.5, 0.5),
    (100.0, 0.92, 100.0, 1e-5, 8e-4, 2.0, 2.0, 2.0),
    (350.0, 0.92, 100.0, 1e-5, 4e-4, 5.0, 5.0, 5.0),
    (200.0, 0.97, 100.0, 5e-5, 2e-4, 1.0, 1.0, 1.0),
)

# Narrowed search box for the default three-layer head: replay length,
# membrane decay, input rate, potentiation step, |depression step|, and one
# firing threshold per plastic layer.
DEFAULT_GA_BOUNDS = (
    (50.0, 500.0), (0.9, 0.999), (50.0, 200.0), (1e-5, 2e-4), (1e-4, 1e-3),
    (0.1, 5.0), (0.1, 5.0), (0.1, 5.0),
)


def default_spec(trials=10, methods=("baseline", "src", "ts", "src+ts")):
    """Desk-scale overconfident experiment: overlapping Gaussian classes with
    label noise, a one-layer frozen backbone and a three-layer plastic head,
    trained well past the point where confidence outruns accuracy.  The
    baseline is trained once and shared; each trial re-runs the calibration
    methods with its own seed."""
    return ExperimentSpec(
        dataset={"type": "synthetic", "classes": 10, "dim": 32,
                 "samples": 20000, "separation": 0.55, "cluster_std": 1.0,
                 "seed": 20240901, "label_noise": 0.12},
        split={"fractions": [0.5, 0.3, 0.2], "seed": 42,
               "imagenet_protocol": False},
        model={"widths": [32, 64, 64, 32, 10], "head_start": 1, "bias": True,
               "head_bias": False},
        train={"learning_rate": 0.01, "momentum": 0.9, "l2": 0.0,
               "batch_size": 32, "epochs": 25, "lr_decay": 0.9,
               "decay_every": 20},
        methods=list(methods),
        trials=trials,
        base_seed=11,
        baseline_seed=4001,
        ga={"population_size": 24, "generations": 12, "elite_count": 2,
            "tournament_size": 3, "mutation_rate": 0.25,
            "mutation_sigma": 0.15, "crossover_rate": 0.7,
            "fitness": "nll-margin", "nll_weight": 0.15, "acc_margin": 0.010,
            "penalty_weight": 30.0, "restarts": 2, "dt": 0.001,
            "bounds": [list(b) for b in DEFAULT_GA_BOUNDS],
            "warm_starts": [list(g) for g in DEFAULT_WARM_STARTS],
            "valve_scales": [2.0, 1.6, 1.35, 1.15, 1.0, 0.85, 0.7, 0.55, 0.4],
            "valve_margin": 0.0095},
    )


def build_dataset(dcfg):
    kind = dcfg.get("type", "synthetic")
    if kind == "synthetic":
        return generate_synthetic(dcfg["classes"], dcfg["dim"],
                                  dcfg["samples"], dcfg["separation"],
                                  dcfg["cluster_std"], dcfg["seed"],
                                  label_noise=dcfg.get("label_noise", 0.0))
    if kind == "csv":
        return ingest_csv(dcfg["path"], dcfg.get("class_count"))
    if kind == "idx":
        return ingest_idx(dcfg["images"], dcfg["labels"],
                          dcfg.get("class_count"))
    raise ConfigError(f"unknown dataset type {kind!r}")


@dataclass
class RunManifest:
    spec: dict
    trial_rows: list          # one dict per (trial, method): seed + metrics
    aggregates: dict          # method -> metric -> {mean, std}
    temperatures: dict        # method -> per-trial fitted T
    sleep_configs: list       # per-trial winning SleepConfig docs (or None)
    analysis_summaries: list  # per-trial dict: transfer masses, weight deltas
    errors: list = field(default_factory=list)  # (trial, stage, message)

    def to_json(self):
        return {
            "spec": self.spec, "trial_rows": self.trial_rows,
            "aggregates": self.aggregates, "temperatures": self.temperatures,
            "sleep_configs": self.sleep_configs,
            "analysis_summaries": self.analysis_summaries,
            "errors": self.errors,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class TrialArtifacts:
    """Trial-0 snapshots for the report bundle (not serialized)."""
    test_batches: dict = field(default_factory=dict)
    transfer_hists: dict = field(default_factory=dict)
    networks: dict = field(default_factory=dict)
    test_data: object = None


def _test_batch(net, test_data, temp=None):
    z = logits(net, test_data.features)
    probs = apply_temperature(z, temp) if temp is not None else softmax(z)
    return PredictionBatch(probs, test_data.labels)


def _tune_sleep_config(net, train_data, val_data, spec, trial_seed,
                       out_dir=None, stats=None, scales=None):
    ga_doc = dict(spec.ga)
    fitness_kind = ga_doc.pop("fitness", "accuracy")
    ece_weight = ga_doc.pop("ece_weight", 1.0)
    nll_weight = ga_doc.pop("nll_weight", 0.15)
    acc_margin = ga_doc.pop("acc_margin", 0.010)
    penalty_weight = ga_doc.pop("penalty_weight", 30.0)
    restarts = ga_doc.pop("restarts", 1)
    dt = ga_doc.pop("dt", 0.001)
    bounds_doc = ga_doc.pop("bounds", None)
    warm_starts = ga_doc.pop("warm_starts", ())
    ga_doc.pop("valve_scales", None)
    ga_doc.pop("valve_margin", None)
    n_layers = len(net.head_layers)
    bounds = (np.asarray(bounds_doc, dtype=np.float64)
              if bounds_doc is not None else default_bounds(n_layers))
    if stats is None:
        stats = compute_input_statistics(net, train_data)
    if scales is None:
        scales = compute_layer_scales(net, train_data)

    if fitness_kind == "nll-margin":
        base = all_metrics(_test_batch(net, val_data), spec.bins)

        def fitness(genome):
            cfg = decode(genome, n_layers, dt=dt, seed=trial_seed)
            try:
                slept = sleep(net, train_data, cfg, stats=stats, scales=scales)
            except Exception:
                return float("-inf")
            m = all_metrics(_test_batch(slept, val_data), spec.bins)
            # Reward the confidence softening (NLL drop) and punish only
            # accuracy losses that exceed the free margin, steeply.
            penalty = min(0.0, m["accuracy"] - (base["accuracy"] - acc_margin))
            return nll_weight * (base["nll"] - m["nll"]) \
                + penalty_weight * penalty
    else:
        weight = ece_weight if fitness_kind == "accuracy-ece" else 0.0

        def fitness(genome):
            return fitness_src(genome, net, train_data, val_data, dt=dt,
                               seed=trial_seed, ece_weight=weight,
                               bins=spec.bins, stats=stats, scales=scales)

    candidates = []
    for r in range(max(1, restarts)):
        ga_cfg = GaConfig(seed=trial_seed + 7 * r,
                          initial_genomes=tuple(warm_starts), **ga_doc)
        best, history = ga_search(fitness, bounds, ga_cfg)
        if out_dir is not None:
            write_ga_log(history, os.path.join(
                out_dir, f"ga_log_{trial_seed}_{r}.csv"))
        candidates.append((fitness(best), best))
    winner = max(candidates, key=lambda c: c[0])[1]
    return decode(winner, n_layers, dt=dt, seed=trial_seed)


def _apply_valve(net, train_data, val_data, scfg, spec, stats, scales):
    """Rescale both plasticity steps along a descending ladder and keep the
    strongest replay whose validation accuracy stays within the margin while
    still raising mean predictive entropy.  Returns the slept network and the
    configuration actually applied."""
    ladder = spec.ga.get("valve_scales")
    margin = spec.ga.get("valve_margin", 0.0095)
    if not ladder:
        return sleep(net, train_data, scfg, stats=stats, scales=scales), scfg
    base = all_metrics(_test_batch(net, val_data), spec.bins)
    fallback = None
    for s in ladder:
        cand_cfg = replace(scfg, stdp_pos=scfg.stdp_pos * s,
                           stdp_neg=scfg.stdp_neg * s)
        cand = sleep(net, train_data, cand_cfg, stats=stats, scales=scales)
        if s == 1.0:
            fallback = (cand, cand_cfg)
        m = all_metrics(_test_batch(cand, val_data), spec.bins)
        if m["accuracy"] >= base["accuracy"] - margin \
                and m["entropy"] > base["entropy"]:
            return cand, cand_cfg
    if fallback is None:
        fallback = (sleep(net, train_data, scfg, stats=stats, scales=scales),
                    scfg)
    return fallback


def train_baseline(spec, train_data, seed):
    """Train the cross-entropy baseline; returns (trained_net, initial_net)."""
    model = spec.model
    net = build_network(model["widths"], model["head_start"], seed,
                        bias=model.get("bias", True),
                        head_bias=model.get("head_bias", True))
    init_net = net.copy()
    train_sgd(net, train_data, TrainConfig(seed=seed, **spec.train),
              LossSpec("ce"))
    return net, init_net


def run_trial(spec, datasets, trial_index, seed, out_dir=None, baseline=None):
    """One trial: train a baseline (or reuse a shared one), apply every
    requested method, evaluate on test."""
    train_data, val_data, test_data = datasets
    if baseline is None:
        net, init_net = train_baseline(spec, train_data, seed)
    else:
        net, init_net = baseline
    tcfg = TrainConfig(seed=seed, **spec.train)

    rows, temps, sleep_doc = {}, {}, None
    artifacts = TrialArtifacts(test_data=test_data)
    artifacts.networks["baseline"] = net

    base_batch = _test_batch(net, test_data)
    rows["baseline"] = base_batch

    slept = None
    if "src" in spec.methods or "src+ts" in spec.methods:
        stats = compute_input_statistics(net, train_data)
        scales = compute_layer_scales(net, train_data)
        if spec.sleep_config is not None:
            scfg = SleepConfig.from_json(spec.sleep_config)
            scfg.seed = seed
            slept = sleep(net, train_data, scfg, stats=stats, scales=scales)
        else:
            scfg = _tune_sleep_config(net, train_data, val_data, spec, seed,
                                      out_dir, stats=stats, scales=scales)
            slept, scfg = _apply_valve(net, train_data, val_data, scfg, spec,
                                       stats, scales)
        sleep_doc = scfg.to_json()
        artifacts.networks["src"] = slept
        if "src" in spec.methods:
            rows["src"] = _test_batch(slept, test_data)

    if "ts" in spec.methods:
        require_fit_split(val_data)
        if spec.temperature is not None:
            temp = Temperature(spec.temperature)
        else:
            temp = fit_temperature(logits(net, val_data.features),
                                   val_data.labels)
        temps["ts"] = temp.value
        rows["ts"] = _test_batch(net, test_data, temp)

    if "src+ts" in spec.methods:
        require_fit_split(val_data)
        temp = fit_temperature(logits(slept, val_data.features),
                               val_data.labels)
        temps["src+ts"] = temp.value
        rows["src+ts"] = _test_batch(slept, test_data, temp)

    for kind in ("ls", "focal"):
        if kind in spec.methods:
            retrain = init_net.copy()
            loss = LossSpec("ls", eps=0.05) if kind == "ls" \
                else LossSpec("focal", alpha=1.0, gamma=1.0)
            train_sgd(retrain, train_data, tcfg, loss)
            rows[kind] = _test_batch(retrain, test_data)
            artifacts.networks[kind] = retrain

    # per-trial analysis summaries (confidence transfer + weight direction)
    summary = {}
    for m in ("src", "ts", "src+ts"):
        if m in rows:
            hist = analysis.confidence_transfer(base_batch, rows[m])
            summary[m] = {"above_diagonal": hist.above_diagonal,
                          "on_diagonal": hist.on_diagonal,
                          "below_diagonal": hist.below_diagonal}
            artifacts.transfer_hists[m] = hist
    if slept is not None:
        _, wsummary = analysis.weight_diff_hist(net, slept)
        summary["weight_diff"] = wsummary

    artifacts.test_batches = rows
    metric_rows = []
    for m in spec.methods:
        if m in rows:
            entry = {"trial": trial_index, "seed": seed, "method": m}
            entry.update(all_metrics(rows[m], spec.bins))
            metric_rows.append(entry)
    return metric_rows, temps, sleep_doc, summary, artifacts


def run_experiment(spec, out_dir=None, threads=1):
    """All trials plus aggregation; per-trial failures are recorded and skipped.

    Trials are independent; with threads > 1 they run on a thread pool and are
    still aggregated in trial-index order, so results are identical.
    """
    full = build_dataset(spec.dataset)
    datasets = split_dataset(full, spec.split.get("fractions", [0.6, 0.2, 0.2]),
                             spec.split.get("seed", 0),
                             spec.split.get("imagenet_protocol", False))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    seeds = spec.trial_seeds()
    baseline = None
    if spec.baseline_seed is not None:
        baseline = train_baseline(spec, datasets[0], spec.baseline_seed)
    results = [None] * len(seeds)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_trial, spec, datasets, t, seed, out_dir,
                                   baseline)
                       for t, seed in enumerate(seeds)]
        for t, fut in enumerate(futures):
            try:
                results[t] = fut.result()
            except Exception as exc:
                results[t] = exc
    else:
        for t, seed in enumerate(seeds):
            try:
                results[t] = run_trial(spec, datasets, t, seed, out_dir,
                                       baseline)
            except Exception as exc:
                results[t] = exc

    all_rows, temps, sleep_docs, summaries, errors = [], {}, [], [], []
    artifacts = None
    for t, res in enumerate(results):
        if isinstance(res, Exception):
            errors.append({"trial": t, "stage": type(res).__name__,
                           "message": str(res)})
            continue
        rows, trial_temps, sleep_doc, summary, arts = res
        all_rows.extend(rows)
        for m, v in trial_temps.items():
            temps.setdefault(m, []).append(v)
        sleep_docs.append(sleep_doc)
        summaries.append(summary)
        if artifacts is None:
            artifacts = arts
    aggregates = {}
    for m in spec.methods:
        vals = {k: [r[k] for r in all_rows if r["method"] == m]
                for k in METRIC_NAMES}
        if not vals["accuracy"]:
            continue
        aggregates[m] = {
            k: {"mean": float(np.mean(v)), "std": float(np.std(v))}
            for k, v in vals.items()
        }
    manifest = RunManifest(spec.to_json(), all_rows, aggregates, temps,
                           sleep_docs, summaries, errors)
    return manifest, artifacts


def _best_flags(aggregates, methods):
    def pick(cands, metric):
        means = {m: aggregates[m][metric]["mean"] for m in cands}
        chooser = max if METRIC_HIGHER_BETTER[metric] else min
        return chooser(means, key=means.get)

    flags = {}
    post_hoc = [m for m in methods if m in POST_HOC_METHODS and m in aggregates]
    present = [m for m in methods if m in aggregates]
    for metric in METRIC_NAMES:
        if post_hoc:
            flags.setdefault("post_hoc", {})[metric] = pick(post_hoc, metric)
        if present:
            flags.setdefault("overall", {})[metric] = pick(present, metric)
    return flags


def _write_metric_csv(path, aggregates, methods, field):
    with open(path, "w") as fh:
        fh.write("method," + ",".join(METRIC_NAMES) + "\n")
        for m in methods:
            if m not in aggregates:
                continue
            vals = ",".join(f"{aggregates[m][k][field]:.12g}"
                            for k in METRIC_NAMES)
            fh.write(f"{m},{vals}\n")


def emit_report(manifest, out_dir, artifacts=None):
    """Write metrics.csv / metrics_std.csv, best flags, per-trial rows, and
    (when artifacts are available) the reliability and analysis bundle."""
    os.makedirs(out_dir, exist_ok=True)
    methods = manifest.spec["methods"]
    _write_metric_csv(os.path.join(out_dir, "metrics.csv"),
                      manifest.aggregates, methods, "mean")
    _write_metric_csv(os.path.join(out_dir, "metrics_std.csv"),
                      manifest.aggregates, methods, "std")
    flags = _best_flags(manifest.aggregates, methods)
    with open(os.path.join(out_dir, "best_methods.json"), "w") as fh:
        json.dump(flags, fh, indent=2)
    with open(os.path.join(out_dir, "trial_metrics.csv"), "w") as fh:
        fh.write("trial,seed,method," + ",".join(METRIC_NAMES) + "\n")
        for r in manifest.trial_rows:
            vals = ",".join(f"{r[k]:.12g}" for k in METRIC_NAMES)
            fh.write(f"{r['trial']},{r['seed']},{r['method']},{vals}\n")
    manifest.save(os.path.join(out_dir, "manifest.json"))

    if artifacts is None:
        return
    bins = manifest.spec.get("bins", 15)
    for m, batch in artifacts.test_batches.items():
        rb = reliability_bins(batch, bins)
        safe = m.replace("+", "_")
        rb.to_csv(os.path.join(out_dir, f"reliability_{safe}.csv"))
        analysis.plot_reliability(
            rb, os.path.join(out_dir, f"reliability_{safe}.svg"),
            title=f"reliability: {m}")
    for m, hist in artifacts.transfer_hists.items():
        safe = m.replace("+", "_")
        hist.to_csv(os.path.join(out_dir, f"confidence_transfer_{safe}.csv"))
        analysis.plot_heatmap2d(
            hist, os.path.join(out_dir, f"confidence_transfer_{safe}.svg"),
            title=f"confidence transfer: {m}")
    nets = artifacts.networks
    data = artifacts.test_data
    feat_hists, feat_labels = [], []
    sparse_hists = []
    for m in ("baseline", "src", "ls"):
        if m in nets:
            fh1 = analysis.feature_magnitude_hist(nets[m], data)
            fh1.to_csv(os.path.join(out_dir, f"feature_magnitude_{m}.csv"))
            feat_hists.append(fh1)
            feat_labels.append(m)
            sh = analysis.sparsity_hist(nets[m], data)
            sh.to_csv(os.path.join(out_dir, f"sparsity_{m}.csv"))
            sparse_hists.append(sh)
    if feat_hists:
        analysis.plot_histogram1d(
            feat_hists, os.path.join(out_dir, "feature_magnitude.svg"),
            labels=feat_labels, title="head feature magnitudes",
            xlabel="activation value")
        analysis.plot_histogram1d(
            sparse_hists, os.path.join(out_dir, "sparsity.svg"),
            labels=feat_labels, title="per-sample nonzero fraction",
            xlabel="fraction of nonzero activations")
    if "baseline" in nets and "src" in nets:
        wh, _ = analysis.weight_diff_hist(nets["baseline"], nets["src"])
        wh.to_csv(os.path.join(out_dir, "weight_diff_src.csv"))
        analysis.plot_histogram1d(
            wh, os.path.join(out_dir, "weight_diff_src.svg"),
            title="head weight changes after sleep", xlabel="weight delta")
