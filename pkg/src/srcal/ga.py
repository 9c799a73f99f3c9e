"""Genetic-algorithm tuner for sleep hyperparameters: real-valued genomes with
tournament selection, uniform crossover, Gaussian mutation, and elitism."""

from dataclasses import dataclass, field

import numpy as np

from .data import ConfigError, require_fit_split
from .metrics import PredictionBatch, ece as _ece
from .network import logits, softmax
from .sleep import SleepConfig, sleep

N_SCALAR_GENES = 5  # steps, decay, max_rate, stdp_pos, |stdp_neg|


@dataclass
class Genome:
    genes: np.ndarray
    bounds: np.ndarray  # (G, 2) columns (low, high)

    def __post_init__(self):
        self.genes = np.asarray(self.genes, dtype=np.float64)
        self.bounds = np.asarray(self.bounds, dtype=np.float64)
        if self.bounds.shape != (self.genes.shape[0], 2):
            raise ConfigError("bounds must be (G, 2)")

    def clipped(self):
        return Genome(np.clip(self.genes, self.bounds[:, 0],
                              self.bounds[:, 1]), self.bounds)


@dataclass
class GaConfig:
    population_size: int = 40
    generations: int = 50
    elite_count: int = 2
    tournament_size: int = 3
    mutation_rate: float = 0.2
    mutation_sigma: float = 0.1  # fraction of each gene's range
    crossover_rate: float = 0.7
    seed: int = 0
    initial_genomes: tuple = ()  # warm-start genomes injected into generation 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        if not 0 <= self.elite_count < self.population_size:
            raise ConfigError("elite_count must be < population_size")


def default_bounds(head_layer_count):
    """Search envelope spanning the observed range of useful replay settings."""
    rows = [
        (50.0, 500.0),     # steps
        (0.9, 0.999),      # decay
        (50.0, 400.0),     # max spiking rate
        (1e-5, 1e-3),      # positive increment
        (1e-5, 1e-3),      # negative increment magnitude
    ]
    rows += [(0.1, 25.0)] * head_layer_count
    return np.asarray(rows)


def decode(genome, head_layer_count, dt=0.001, seed=0):
    """Genome -> SleepConfig; steps round to an integer, stdp_neg maps to <= 0."""
    g = genome.genes
    if g.shape[0] != N_SCALAR_GENES + head_layer_count:
        raise ConfigError(
            f"genome has {g.shape[0]} genes, expected "
            f"{N_SCALAR_GENES + head_layer_count}")
    return SleepConfig(
        steps=max(1, int(round(g[0]))),
        dt=dt,
        decay=float(g[1]),
        max_rate=float(g[2]),
        stdp_pos=float(g[3]),
        stdp_neg=-float(g[4]),
        thresholds=[float(b) for b in g[N_SCALAR_GENES:]],
        seed=seed,
    )


def encode(cfg, bounds=None):
    genes = np.array([float(cfg.steps), cfg.decay, cfg.max_rate,
                      cfg.stdp_pos, -cfg.stdp_neg] + list(cfg.thresholds))
    if bounds is None:
        bounds = default_bounds(len(cfg.thresholds))
    return Genome(genes, bounds)


def _tournament(rng, fits, k):
    contenders = rng.integers(0, fits.shape[0], size=k)
    return contenders[np.argmax(fits[contenders])]


def ga_search(fitness, bounds, cfg):
    """Maximize `fitness` over the box `bounds`; returns (best genome, history).

    Non-finite fitness values are treated as -inf and the search continues.
    """
    bounds = np.asarray(bounds, dtype=np.float64)
    n_genes = bounds.shape[0]
    low, high = bounds[:, 0], bounds[:, 1]
    span = high - low
    rng = np.random.default_rng(cfg.seed)

    def safe_fitness(genes):
        val = fitness(Genome(genes, bounds))
        return float(val) if np.isfinite(val) else -np.inf

    pop = rng.uniform(low, high, size=(cfg.population_size, n_genes))
    for i, warm in enumerate(cfg.initial_genomes):
        if i >= cfg.population_size:
            break
        genes = warm.genes if isinstance(warm, Genome) else np.asarray(
            warm, dtype=np.float64)
        if genes.shape[0] != n_genes:
            raise ConfigError("warm-start genome has wrong gene count")
        pop[i] = np.clip(genes, low, high)
    fits = np.array([safe_fitness(g) for g in pop])
    best_idx = int(np.argmax(fits))
    best_genes, best_fit = pop[best_idx].copy(), fits[best_idx]
    history = []
    for gen in range(cfg.generations):
        history.append({"generation": gen, "best": float(fits.max()),
                        "mean": float(np.mean(fits[np.isfinite(fits)]))
                        if np.any(np.isfinite(fits)) else float("-inf"),
                        "worst": float(fits.min())})
        order = np.argsort(-fits, kind="stable")
        new_pop = [pop[i].copy() for i in order[:cfg.elite_count]]
        new_fits = [fits[i] for i in order[:cfg.elite_count]]
        while len(new_pop) < cfg.population_size:
            p1 = pop[_tournament(rng, fits, cfg.tournament_size)].copy()
            p2 = pop[_tournament(rng, fits, cfg.tournament_size)].copy()
            if rng.random() < cfg.crossover_rate:
                mask = rng.random(n_genes) < 0.5
                p1[mask], p2[mask] = p2[mask], p1[mask].copy()
            for child in (p1, p2):
                if len(new_pop) >= cfg.population_size:
                    break
                mut = rng.random(n_genes) < cfg.mutation_rate
                if mut.any():
                    child = child + mut * rng.normal(0.0, 1.0, n_genes) \
                        * cfg.mutation_sigma * span
                child = np.clip(child, low, high)
                new_pop.append(child)
                new_fits.append(safe_fitness(child))
        pop = np.asarray(new_pop)
        fits = np.asarray(new_fits)
        gen_best = int(np.argmax(fits))
        if fits[gen_best] > best_fit:
            best_genes, best_fit = pop[gen_best].copy(), fits[gen_best]
    history.append({"generation": cfg.generations, "best": float(fits.max()),
                    "mean": float(np.mean(fits[np.isfinite(fits)]))
                    if np.any(np.isfinite(fits)) else float("-inf"),
                    "worst": float(fits.min())})
    return Genome(best_genes, bounds), history


def fitness_src(genome, base_net, train_data, val_data, dt=0.001, seed=0,
                ece_weight=0.0, bins=15, stats=None, scales=None):
    """Validation accuracy of the slept network; optionally accuracy - w * ECE."""
    require_fit_split(val_data)
    try:
        cfg = decode(genome, len(base_net.head_layers), dt=dt, seed=seed)
        slept = sleep(base_net, train_data, cfg, stats=stats, scales=scales)
        probs = softmax(logits(slept, val_data.features))
        batch = PredictionBatch(probs, val_data.labels)
        acc = float(np.mean(batch.predictions == batch.labels))
        if ece_weight:
            return acc - ece_weight * _ece(batch, bins)
        return acc
    except (ConfigError, FloatingPointError, ValueError, RuntimeError):
        return float("-inf")


def write_ga_log(history, path):
    with open(path, "w") as fh:
        fh.write("generation,best,mean,worst\n")
        for row in history:
            fh.write(f"{row['generation']},{row['best']:.12g},"
                     f"{row['mean']:.12g},{row['worst']:.12g}\n")
