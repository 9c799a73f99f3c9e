"""Sleep replay for plastic heads: spiking conversion, Poisson replay, Hebbian updates.

The replay loop is the hot path (the tuner runs it thousands of times), so a
compiled kernel is used when available; set SRCAL_PURE_PYTHON=1 to force the
numpy fallback. Both paths produce bit-identical weights.
"""

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ConfigError
from .network import forward_batch

try:
    from . import _sleepcore
except ImportError:  # pure-python install
    _sleepcore = None

USE_FAST_KERNEL = (_sleepcore is not None
                   and os.environ.get("SRCAL_PURE_PYTHON", "") != "1")

SCALE_FLOOR = 1e-8


class SleepNumericError(RuntimeError):
    pass


@dataclass
class SleepConfig:
    """Replay hyperparameters; stdp_neg is stored signed (<= 0) and added as-is."""
    steps: int
    dt: float
    decay: float
    max_rate: float
    stdp_pos: float
    stdp_neg: float
    thresholds: list
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigError("decay must lie in [0, 1]")
        if self.max_rate <= 0:
            raise ConfigError("max_rate must be positive")
        self.thresholds = [float(b) for b in self.thresholds]
        if any(b <= 0 for b in self.thresholds):
            raise ConfigError("thresholds must be positive")

    def to_json(self):
        return {
            "Time Steps": self.steps,
            "dt": self.dt,
            "Decay Rate": self.decay,
            "Max Spiking Rate": self.max_rate,
            "Positive STDP": self.stdp_pos,
            "Negative STDP": self.stdp_neg,
            "Spiking Thresholds": list(self.thresholds),
            "Seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            steps=int(doc["Time Steps"]),
            dt=float(doc["dt"]),
            decay=float(doc["Decay Rate"]),
            max_rate=float(doc["Max Spiking Rate"]),
            stdp_pos=float(doc["Positive STDP"]),
            stdp_neg=float(doc["Negative STDP"]),
            thresholds=[float(b) for b in doc["Spiking Thresholds"]],
            seed=int(doc.get("Seed", 0)),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class SpikeState:
    """Membrane voltages per plastic layer and spike flags per layer (0 = input)."""
    voltages: list
    spikes: list
    step: int = 0


def new_spike_state(net):
    head = net.head_layers
    voltages = [np.zeros(l.out_dim) for l in head]
    spikes = [np.zeros(head[0].in_dim, dtype=np.uint8)]
    spikes += [np.zeros(l.out_dim, dtype=np.uint8) for l in head]
    return SpikeState(voltages, spikes)


def compute_input_statistics(net, data):
    """Mean head-input activation per feature, clamped at zero."""
    if data.n == 0:
        raise ConfigError("cannot compute input statistics on empty data")
    if net.head_start == 0:
        head_in = data.features
    else:
        head_in = forward_batch(net, data.features)[net.head_start - 1]
    return np.maximum(head_in.mean(axis=0), 0.0)


def compute_layer_scales(net, data):
    """Max activation entering each plastic layer over the dataset (global per layer)."""
    if data.n == 0:
        raise ConfigError("cannot compute layer scales on empty data")
    acts = forward_batch(net, data.features)
    scales = []
    for k in range(len(net.head_layers)):
        li = net.head_start + k
        layer_in = data.features if li == 0 else acts[li - 1]
        alpha = float(layer_in.max())
        if alpha < SCALE_FLOOR:
            warnings.warn(f"all-zero activations entering plastic layer {k}; "
                          f"scale floored at {SCALE_FLOOR}")
            alpha = SCALE_FLOOR
        scales.append(alpha)
    return np.asarray(scales)


def poisson_encode(stats, cfg, rng):
    """One step of Bernoulli spikes with p = clamp(I * max_rate * dt, 0, 1)."""
    p = np.clip(stats * cfg.max_rate * cfg.dt, 0.0, 1.0)
    return (rng.random(stats.shape[0]) < p).astype(np.uint8)


def _weighted_spike_sum(weights, pre_spikes):
    # sequential left-to-right sum over active presynaptic columns; keeps the
    # numpy path bit-identical to the compiled kernel and the scalar reference
    active = np.nonzero(pre_spikes)[0]
    if active.size == 0:
        return np.zeros(weights.shape[0])
    return np.add.accumulate(weights[:, active], axis=1)[:, -1]


def spiking_step(net, state, scales, cfg, input_spikes):
    """One replay step: leaky integration, threshold spikes, reset, ascending layers."""
    head = net.head_layers
    state.step += 1
    state.spikes[0][:] = input_spikes
    for l, layer in enumerate(head):
        contrib = _weighted_spike_sum(layer.weights, state.spikes[l])
        v = cfg.decay * state.voltages[l] + scales[l] * contrib
        if not np.all(np.isfinite(v)):
            raise SleepNumericError(
                f"non-finite voltage in plastic layer {l} at step {state.step}")
        fired = v > cfg.thresholds[l]
        v[fired] = 0.0
        state.voltages[l] = v
        state.spikes[l + 1] = fired.astype(np.uint8)
    return state


def hebbian_update(net, state, cfg):
    """Signed Hebbian rule on synapses into units that spiked this step."""
    for l, layer in enumerate(net.head_layers):
        post = np.nonzero(state.spikes[l + 1])[0]
        if post.size == 0:
            continue
        delta = np.where(state.spikes[l].astype(bool), cfg.stdp_pos, cfg.stdp_neg)
        layer.weights[post] += delta


def generate_input_spikes(stats, cfg):
    """All replay-phase input spikes up front, one Poisson draw per step."""
    rng = np.random.default_rng(cfg.seed)
    return np.stack([poisson_encode(stats, cfg, rng) for _ in range(cfg.steps)])


def _run_sleep_python(net, input_spikes, scales, cfg):
    state = new_spike_state(net)
    for t in range(input_spikes.shape[0]):
        spiking_step(net, state, scales, cfg, input_spikes[t])
        hebbian_update(net, state, cfg)


def sleep(net, data, cfg, stats=None, scales=None, force_python=False):
    """Run the full replay phase on a copy of `net`; backbone is untouched.

    `stats`/`scales` may be precomputed (they depend only on net and data),
    which the tuner relies on when evaluating many configs.
    """
    head = net.head_layers
    if len(cfg.thresholds) != len(head):
        raise ConfigError(
            f"{len(cfg.thresholds)} thresholds for {len(head)} plastic layers")
    if stats is None:
        stats = compute_input_statistics(net, data)
    if scales is None:
        scales = compute_layer_scales(net, data)
    if stats.shape[0] != head[0].in_dim:
        raise ConfigError("input statistics dimension mismatch")
    input_spikes = generate_input_spikes(stats, cfg)
    out = net.copy()
    thresholds = np.asarray(cfg.thresholds, dtype=np.float64)
    if USE_FAST_KERNEL and not force_python and np.all(np.isfinite(thresholds)):
        weights = [l.weights for l in out.head_layers]
        _sleepcore.run_sleep(weights, input_spikes,
                             np.ascontiguousarray(scales, dtype=np.float64),
                             thresholds, cfg.decay, cfg.stdp_pos, cfg.stdp_neg)
    else:
        _run_sleep_python(out, input_spikes, scales, cfg)
    return out
