"""Datasets: labeled feature vectors, synthetic generation, CSV/IDX ingestion."""

import struct

import numpy as np


class ConfigError(ValueError):
    pass


class ParseError(ValueError):
    pass


class SplitHygieneError(RuntimeError):
    """A method-fitting step received test-split data."""


class LabeledDataset:
    """Feature matrix (N, d) with integer class labels and a split-provenance tag."""

    def __init__(self, features, labels, class_count, role="unsplit"):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2:
            raise ConfigError("features must be a 2-D array")
        if labels.shape != (features.shape[0],):
            raise ConfigError("labels must be one per sample")
        if class_count < 2:
            raise ConfigError("class_count must be >= 2")
        if labels.size and (labels.min() < 0 or labels.max() >= class_count):
            raise ConfigError("labels must lie in [0, class_count)")
        if not np.all(np.isfinite(features)):
            raise ConfigError("features must be finite")
        self.features = features
        self.labels = labels
        self.class_count = class_count
        self.role = role

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def subset(self, idx, role):
        return LabeledDataset(self.features[idx], self.labels[idx],
                              self.class_count, role=role)

    def __eq__(self, other):
        return (isinstance(other, LabeledDataset)
                and self.class_count == other.class_count
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))


def generate_synthetic(classes, dim, samples, separation, cluster_std, seed,
                       label_noise=0.0):
    """Gaussian class clusters; `separation` vs `cluster_std` controls overlap.

    `label_noise` relabels that fraction of samples uniformly at random among
    the other classes, capping achievable accuracy below the confidence a
    plain cross-entropy fit reaches.
    """
    if classes < 2:
        raise ConfigError("need at least 2 classes")
    if cluster_std <= 0:
        raise ConfigError("cluster_std must be positive (degenerate covariance)")
    if not 0.0 <= label_noise < 1.0:
        raise ConfigError("label_noise must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    means = rng.normal(scale=separation, size=(classes, dim))
    labels = rng.integers(0, classes, size=samples)
    features = means[labels] + rng.normal(scale=cluster_std, size=(samples, dim))
    if label_noise > 0.0:
        flip = rng.random(samples) < label_noise
        labels = labels.copy()
        labels[flip] = (labels[flip] + rng.integers(1, classes, size=int(flip.sum()))) % classes
    return LabeledDataset(features, labels, classes)


def split_dataset(ds, fractions, seed, imagenet_protocol=False):
    """Shuffle and split into (train, val, test) tagged datasets.

    With imagenet_protocol, the nominal val+test mass becomes the validation
    pool and is split evenly into tuning and test halves.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_train = int(round(fractions[0] * ds.n))
    if imagenet_protocol:
        pool = perm[n_train:]
        half = pool.size // 2
        val_idx, test_idx = pool[:half], pool[half:]
    else:
        n_val = int(round(fractions[1] * ds.n))
        val_idx = perm[n_train:n_train + n_val]
        test_idx = perm[n_train + n_val:]
    return (ds.subset(perm[:n_train], "train"),
            ds.subset(val_idx, "val"),
            ds.subset(test_idx, "test"))


def require_fit_split(ds):
    """Guard: fitting operations must never see the test split."""
    if ds.role == "test":
        raise SplitHygieneError("method fitting attempted on the test split")


def ingest_csv(path, class_count=None):
    """One sample per row, label as the last column."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vals = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad value ({exc})") from None
            if rows and len(vals) != len(rows[0]):
                raise ParseError(f"{path}:{lineno}: inconsistent column count")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: empty file")
    arr = np.asarray(rows, dtype=np.float64)
    labels = arr[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ParseError(f"{path}: non-integer labels in last column")
    labels = labels.astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if labels.max() >= 1 else 2
    return LabeledDataset(arr[:, :-1], labels, class_count)


def export_csv(ds, path):
    with open(path, "w") as fh:
        for x, y in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in x) + f",{int(y)}\n")


_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def ingest_idx(images_path, labels_path, class_count=None):
    """IDX image/label pair (big-endian headers); pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ParseError(f"{images_path}: truncated header at offset {len(header)}")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != _IDX_IMAGE_MAGIC:
            raise ParseError(f"{images_path}: bad magic 0x{magic:08x} at offset 0")
        pixels = np.frombuffer(fh.read(), dtype=np.uint8)
    if pixels.size != n * rows * cols:
        raise ParseError(f"{images_path}: expected {n * rows * cols} pixels, "
                         f"got {pixels.size}")
    with open(labels_path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise ParseError(f"{labels_path}: truncated header at offset {len(header)}")
        magic, n_lab = struct.unpack(">II", header)
        if magic != _IDX_LABEL_MAGIC:
            raise ParseError(f"{labels_path}: bad magic 0x{magic:08x} at offset 0")
        labels = np.frombuffer(fh.read(), dtype=np.uint8)
    if labels.size != n_lab or n_lab != n:
        raise ParseError("image/label counts disagree")
    features = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    if class_count is None:
        class_count = max(int(labels.max()) + 1, 2)
    return LabeledDataset(features, labels, class_count)
