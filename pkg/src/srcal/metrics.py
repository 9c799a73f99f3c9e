"""Calibration metrics over batches of probability vectors: ECE with equal-width
binning, NLL, Brier score, mean entropy, accuracy, and reliability-bin tables."""

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12
DEFAULT_BINS = 15


class BatchError(ValueError):
    pass


class PredictionBatch:
    """N probability rows with true labels; confidence = max-class probability."""

    def __init__(self, probs, labels):
        probs = np.asarray(probs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if probs.ndim != 2 or probs.shape[0] < 1:
            raise BatchError("probs must be a nonempty (N, C) matrix")
        if labels.shape != (probs.shape[0],):
            raise BatchError("labels must be one per sample")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise BatchError("probability rows must sum to 1")
        if labels.min() < 0 or labels.max() >= probs.shape[1]:
            raise BatchError("labels out of range")
        self.probs = probs
        self.labels = labels
        # argmax ties resolve to the lowest class index
        self.predictions = np.argmax(probs, axis=1)
        self.confidences = probs[np.arange(probs.shape[0]), self.predictions]

    @property
    def n(self):
        return self.probs.shape[0]

    @property
    def class_count(self):
        return self.probs.shape[1]


@dataclass
class ReliabilityBins:
    """Per-bin stats over M equal-width confidence bins covering (0, 1]."""
    edges: np.ndarray    # M+1 boundaries, bin m is (edges[m], edges[m+1]]
    counts: np.ndarray
    acc: np.ndarray      # 0.0 for empty bins
    conf: np.ndarray

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("bin_low,bin_high,count,acc,conf\n")
            for m in range(self.counts.shape[0]):
                fh.write(f"{self.edges[m]:.12g},{self.edges[m + 1]:.12g},"
                         f"{int(self.counts[m])},{self.acc[m]:.12g},"
                         f"{self.conf[m]:.12g}\n")


def reliability_bins(batch, m_bins=DEFAULT_BINS):
    if m_bins < 1:
        raise ValueError("need at least one bin")
    edges = np.arange(m_bins + 1) / m_bins
    # first index with conf <= edges[i]; confidence 0 would land in bin 0
    idx = np.searchsorted(edges[1:], batch.confidences, side="left")
    counts = np.zeros(m_bins, dtype=np.int64)
    acc = np.zeros(m_bins)
    conf = np.zeros(m_bins)
    correct = batch.predictions == batch.labels
    for m in range(m_bins):
        mask = idx == m
        counts[m] = int(mask.sum())
        if counts[m]:
            acc[m] = float(correct[mask].mean())
            conf[m] = float(batch.confidences[mask].mean())
    return ReliabilityBins(edges, counts, acc, conf)


def ece(batch, m_bins=DEFAULT_BINS):
    bins = reliability_bins(batch, m_bins)
    weights = bins.counts / batch.n
    return float(np.sum(weights * np.abs(bins.acc - bins.conf)))


def accuracy(batch):
    return float(np.mean(batch.predictions == batch.labels))


def nll(batch):
    """Mean negative log-likelihood of the true class (reported as a mean)."""
    p_true = batch.probs[np.arange(batch.n), batch.labels]
    return float(np.mean(-np.log(np.maximum(p_true, PROB_FLOOR))))


def brier(batch):
    onehot = np.zeros_like(batch.probs)
    onehot[np.arange(batch.n), batch.labels] = 1.0
    return float(np.mean(np.sum((batch.probs - onehot) ** 2, axis=1)))


def entropy(batch):
    """Mean Shannon entropy (natural log), with 0 log 0 = 0."""
    p = batch.probs
    terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(np.mean(terms.sum(axis=1)))


def all_metrics(batch, m_bins=DEFAULT_BINS):
    return {
        "accuracy": accuracy(batch),
        "ece": ece(batch, m_bins),
        "nll": nll(batch),
        "brier": brier(batch),
        "entropy": entropy(batch),
    }
