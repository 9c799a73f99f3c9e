"""Representation and confidence analyses: confidence-transfer 2-D histograms,
feature-magnitude and activation-sparsity histograms, weight-change summaries."""

import warnings
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .network import InputShapeError, forward_batch


@dataclass
class Histogram1D:
    edges: np.ndarray
    counts: np.ndarray

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("bin_low,bin_high,count\n")
            for m in range(self.counts.shape[0]):
                fh.write(f"{self.edges[m]:.12g},{self.edges[m + 1]:.12g},"
                         f"{int(self.counts[m])}\n")


@dataclass
class Histogram2D:
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray
    above_diagonal: int = 0
    on_diagonal: int = 0
    below_diagonal: int = 0

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x_bin,y_bin,x_low,x_high,y_low,y_high,count\n")
            for i in range(self.counts.shape[0]):
                for j in range(self.counts.shape[1]):
                    fh.write(f"{i},{j},{self.x_edges[i]:.12g},"
                             f"{self.x_edges[i + 1]:.12g},"
                             f"{self.y_edges[j]:.12g},{self.y_edges[j + 1]:.12g},"
                             f"{int(self.counts[i, j])}\n")


def confidence_transfer(base, method, bins=40):
    """2-D histogram of per-sample confidences: base on x, method on y."""
    if base.n != method.n:
        raise InputShapeError("batches must have the same sample count")
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _, _ = np.histogram2d(base.confidences, method.confidences,
                                  bins=[edges, edges])
    return Histogram2D(
        edges, edges, counts.astype(np.int64),
        above_diagonal=int(np.sum(method.confidences > base.confidences)),
        on_diagonal=int(np.sum(method.confidences == base.confidences)),
        below_diagonal=int(np.sum(method.confidences < base.confidences)),
    )


def _head_activations(net, data, head_layer_indices):
    acts = forward_batch(net, data.features)
    n_head = len(net.head_layers)
    if head_layer_indices is None:
        head_layer_indices = list(range(min(2, n_head)))
    for k in head_layer_indices:
        if not 0 <= k < n_head:
            raise InputShapeError(f"head layer index {k} out of range")
    return [acts[net.head_start + k] for k in head_layer_indices]


def feature_magnitude_hist(net, data, head_layer_indices=None, bins=50):
    """Histogram of post-activation values of the selected head layers."""
    values = np.concatenate([a.ravel() for a in
                             _head_activations(net, data, head_layer_indices)])
    counts, edges = np.histogram(values, bins=bins)
    return Histogram1D(edges, counts.astype(np.int64))


def sparsity_hist(net, data, head_layer_indices=None, bins=50, threshold=0.0):
    """Per-sample fraction of selected-layer activations strictly above threshold."""
    acts = _head_activations(net, data, head_layer_indices)
    stacked = np.concatenate(acts, axis=1)
    fractions = np.mean(stacked > threshold, axis=1)
    counts, edges = np.histogram(fractions, bins=bins, range=(0.0, 1.0))
    return Histogram1D(edges, counts.astype(np.int64))


def weight_diff_hist(before, after, bins=50):
    """Histogram of elementwise head-weight deltas, plus a direction summary."""
    if len(before.layers) != len(after.layers) or \
            before.head_start != after.head_start:
        raise InputShapeError("networks differ in architecture")
    deltas = []
    for lb, la in zip(before.head_layers, after.head_layers):
        if lb.weights.shape != la.weights.shape:
            raise InputShapeError("networks differ in architecture")
        deltas.append((la.weights - lb.weights).ravel())
    deltas = np.concatenate(deltas)
    lo, hi = float(deltas.min()), float(deltas.max())
    # (near-)constant deltas leave no representable bin widths; widen
    if hi - lo <= bins * np.finfo(np.float64).eps * max(abs(lo), abs(hi), 1.0):
        pad = max(abs(lo), 0.5)
        lo, hi = lo - pad, hi + pad
    counts, edges = np.histogram(deltas, bins=bins, range=(lo, hi))
    summary = {
        "mean_delta": float(np.mean(deltas)),
        "fraction_negative": float(np.mean(deltas < 0)),
    }
    if summary["fraction_negative"] <= 0.5 and np.any(deltas != 0):
        warnings.warn("post-sleep weight deltas are not predominantly negative "
                      f"(fraction {summary['fraction_negative']:.3f})")
    return Histogram1D(edges, counts.astype(np.int64)), summary


# ---------------------------------------------------------------------------
# SVG plots

def plot_histogram1d(hists, path, labels=None, title="", xlabel=""):
    """Overlaid step histograms; `hists` is one Histogram1D or a list."""
    if isinstance(hists, Histogram1D):
        hists = [hists]
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, h in enumerate(hists):
        label = labels[k] if labels else None
        ax.stairs(h.counts, h.edges, label=label, fill=len(hists) == 1,
                  alpha=0.7)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if labels:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_heatmap2d(hist, path, title="", xlabel="baseline confidence",
                   ylabel="method confidence"):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.pcolormesh(hist.x_edges, hist.y_edges, hist.counts.T, cmap="viridis")
    ax.plot([0, 1], [0, 1], color="red", linewidth=1)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_reliability(bins, path, title="reliability diagram"):
    fig, ax = plt.subplots(figsize=(5, 5))
    widths = np.diff(bins.edges)
    centers = bins.edges[:-1] + widths / 2
    ax.bar(centers, bins.acc, width=widths, edgecolor="black", color="tab:blue",
           label="accuracy")
    gap = np.where(bins.counts > 0, bins.conf - bins.acc, 0.0)
    ax.bar(centers, gap, bottom=bins.acc, width=widths, color="tab:red",
           alpha=0.5, label="gap to confidence")
    ax.plot([0, 1], [0, 1], color="black", linestyle="--", linewidth=1)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
