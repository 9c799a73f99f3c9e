"""Shared helpers: independent scalar oracles and small random fixtures.

The oracles intentionally use plain Python loops and a structure unrelated to
the library's vectorized implementations, so agreement is evidence of
correctness rather than of shared code.
"""

import math

import numpy as np

from srcal.data import LabeledDataset


def random_batch(rng, n_max=200, c_max=20):
    """A random (probs, labels) pair with rows summing to one."""
    n = int(rng.integers(1, n_max + 1))
    c = int(rng.integers(2, c_max + 1))
    raw = rng.random((n, c)) ** 3 + 1e-9  # cube to spread confidences
    probs = raw / raw.sum(axis=1, keepdims=True)
    labels = rng.integers(0, c, size=n)
    return probs, labels


def oracle_accuracy(probs, labels):
    hits = 0
    for i in range(len(labels)):
        pred = 0
        for j in range(1, probs.shape[1]):
            if probs[i, j] > probs[i, pred]:
                pred = j
        hits += int(pred == labels[i])
    return hits / len(labels)


def oracle_nll(probs, labels):
    total = 0.0
    for i in range(len(labels)):
        total += -math.log(max(probs[i, labels[i]], 1e-12))
    return total / len(labels)


def oracle_brier(probs, labels):
    total = 0.0
    for i in range(len(labels)):
        for j in range(probs.shape[1]):
            target = 1.0 if j == labels[i] else 0.0
            total += (probs[i, j] - target) ** 2
    return total / len(labels)


def oracle_entropy(probs, labels):
    total = 0.0
    for i in range(probs.shape[0]):
        for j in range(probs.shape[1]):
            p = probs[i, j]
            if p > 0:
                total += -p * math.log(p)
    return total / probs.shape[0]


def oracle_ece(probs, labels, m_bins=15):
    """Equal-width bins over (0, 1]; confidence 0 falls into the first bin."""
    n, c = probs.shape
    bin_count = [0] * m_bins
    bin_hits = [0] * m_bins
    bin_conf = [0.0] * m_bins
    for i in range(n):
        pred = 0
        for j in range(1, c):
            if probs[i, j] > probs[i, pred]:
                pred = j
        conf = probs[i, pred]
        m = 0
        while m < m_bins - 1 and conf > (m + 1) / m_bins:
            m += 1
        bin_count[m] += 1
        bin_hits[m] += int(pred == labels[i])
        bin_conf[m] += conf
    total = 0.0
    for m in range(m_bins):
        if bin_count[m]:
            acc = bin_hits[m] / bin_count[m]
            conf = bin_conf[m] / bin_count[m]
            total += (bin_count[m] / n) * abs(acc - conf)
    return total


def naive_sleep_reference(net, input_spikes, scales, cfg):
    """Per-synapse scalar re-implementation of the replay loop.

    Mutates a copy of `net` and returns it.  Every operation is done with
    Python floats in the same association order as the kernels, so the result
    must be bit-identical.
    """
    out = net.copy()
    head = out.head_layers
    n_layers = len(head)
    voltages = [[0.0] * l.out_dim for l in head]
    spikes = [[0] * head[0].in_dim] + [[0] * l.out_dim for l in head]
    for t in range(input_spikes.shape[0]):
        for i in range(head[0].in_dim):
            spikes[0][i] = int(input_spikes[t, i])
        for l in range(n_layers):
            w = head[l].weights
            for j in range(head[l].out_dim):
                contrib = 0.0
                for i in range(head[l].in_dim):
                    if spikes[l][i]:
                        contrib += w[j, i]
                v = cfg.decay * voltages[l][j] + scales[l] * contrib
                if v > cfg.thresholds[l]:
                    spikes[l + 1][j] = 1
                    voltages[l][j] = 0.0
                else:
                    spikes[l + 1][j] = 0
                    voltages[l][j] = v
        for l in range(n_layers):
            w = head[l].weights
            for j in range(head[l].out_dim):
                if spikes[l + 1][j]:
                    for i in range(head[l].in_dim):
                        w[j, i] += cfg.stdp_pos if spikes[l][i] \
                            else cfg.stdp_neg
    return out


def tiny_dataset(rng, n=40, dim=4, classes=3):
    feats = rng.normal(size=(n, dim))
    labels = rng.integers(0, classes, size=n)
    return LabeledDataset(feats, labels, classes)
