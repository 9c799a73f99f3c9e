"""Dense feedforward networks: forward passes, losses, SGD training, persistence.

Networks are split at `head_start` into a frozen backbone and a plastic head;
only the head is ever touched by sleep replay, and training can freeze the
backbone too.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12
ACTIVATIONS = ("relu", "identity")


class InputShapeError(ValueError):
    pass


class NumericError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class DenseLayer:
    def __init__(self, weights, bias=None, activation="relu"):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 2:
            raise InputShapeError("weights must be (out, in)")
        if activation not in ACTIVATIONS:
            raise InputShapeError(f"unknown activation {activation!r}")
        if not np.all(np.isfinite(weights)):
            raise NumericError("non-finite weights")
        if bias is not None:
            bias = np.asarray(bias, dtype=np.float64)
            if bias.shape != (weights.shape[0],):
                raise InputShapeError("bias shape must match output dim")
            if not np.all(np.isfinite(bias)):
                raise NumericError("non-finite bias")
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def in_dim(self):
        return self.weights.shape[1]

    def copy(self):
        return DenseLayer(self.weights.copy(),
                          None if self.bias is None else self.bias.copy(),
                          self.activation)


class DenseNetwork:
    """Ordered dense layers; layers before head_start form the frozen backbone."""

    def __init__(self, layers, head_start=0):
        if not layers:
            raise InputShapeError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise InputShapeError(
                    f"layer dims incompatible: {a.out_dim} -> {b.in_dim}")
        if not (0 <= head_start < len(layers)):
            raise InputShapeError("head_start out of range")
        if layers[-1].activation != "identity":
            raise InputShapeError("output layer must emit logits (identity)")
        self.layers = layers
        self.head_start = head_start

    @property
    def feature_dim(self):
        return self.layers[0].in_dim

    @property
    def class_count(self):
        return self.layers[-1].out_dim

    @property
    def head_layers(self):
        return self.layers[self.head_start:]

    def copy(self):
        return DenseNetwork([l.copy() for l in self.layers], self.head_start)

    def backbone_hash(self):
        h = hashlib.sha256()
        for layer in self.layers[:self.head_start]:
            h.update(layer.weights.tobytes())
            if layer.bias is not None:
                h.update(layer.bias.tobytes())
        return h.hexdigest()

    def weights_hash(self):
        h = hashlib.sha256()
        for layer in self.layers:
            h.update(layer.weights.tobytes())
            if layer.bias is not None:
                h.update(layer.bias.tobytes())
        return h.hexdigest()


def _apply_activation(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def forward(net, x):
    """Per-layer activations for one sample, final entry being the logits."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.feature_dim,):
        raise InputShapeError(
            f"input has shape {x.shape}, expected ({net.feature_dim},)")
    acts = []
    a = x
    for layer in net.layers:
        z = layer.weights @ a
        if layer.bias is not None:
            z = z + layer.bias
        a = _apply_activation(z, layer.activation)
        acts.append(a)
    return acts


def forward_batch(net, X):
    """Per-layer activations for a batch, each of shape (N, out_dim)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.feature_dim:
        raise InputShapeError(
            f"batch has shape {X.shape}, expected (N, {net.feature_dim})")
    acts = []
    a = X
    for layer in net.layers:
        z = a @ layer.weights.T
        if layer.bias is not None:
            z = z + layer.bias
        a = _apply_activation(z, layer.activation)
        acts.append(a)
    return acts


def logits(net, X):
    return forward_batch(net, X)[-1]


def softmax(z):
    """Numerically stable softmax over the last axis."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def loss_cross_entropy(p, y):
    p = np.asarray(p, dtype=np.float64)
    return -np.log(max(float(p[y]), PROB_FLOOR))


def loss_label_smoothing(p, y, eps):
    if not 0.0 <= eps < 1.0:
        raise ValueError("smoothing eps must lie in [0, 1)")
    p = np.asarray(p, dtype=np.float64)
    c = p.shape[-1]
    target = np.full(c, eps / (c - 1))
    target[y] = 1.0 - eps
    return float(-(target * np.log(np.maximum(p, PROB_FLOOR))).sum())


def loss_focal(p, y, alpha, gamma):
    if alpha <= 0 or gamma < 0:
        raise ValueError("focal loss needs alpha > 0, gamma >= 0")
    p = np.asarray(p, dtype=np.float64)
    py = max(float(p[y]), PROB_FLOOR)
    return -alpha * (1.0 - py) ** gamma * np.log(py)


@dataclass
class LossSpec:
    """Selector for the training loss: ce | ls | focal."""
    kind: str = "ce"
    eps: float = 0.05
    alpha: float = 1.0
    gamma: float = 1.0

    def evaluate(self, p, y):
        if self.kind == "ce":
            return loss_cross_entropy(p, y)
        if self.kind == "ls":
            return loss_label_smoothing(p, y, self.eps)
        if self.kind == "focal":
            return loss_focal(p, y, self.alpha, self.gamma)
        raise ValueError(f"unknown loss {self.kind!r}")


def loss_grad_logits(probs, labels, loss):
    """d(mean loss)/d(logits) for a batch, times batch size (per-sample grads)."""
    probs = np.asarray(probs, dtype=np.float64)
    n, c = probs.shape
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    if loss.kind == "ce":
        return probs - onehot
    if loss.kind == "ls":
        target = np.full_like(probs, loss.eps / (c - 1))
        target[np.arange(n), labels] = 1.0 - loss.eps
        return probs - target
    if loss.kind == "focal":
        py = np.maximum(probs[np.arange(n), labels], PROB_FLOOR)
        one_minus = 1.0 - probs[np.arange(n), labels]
        # d/dp_y of -alpha (1-p)^g log p; the first term vanishes for g = 0
        if loss.gamma == 0:
            term1 = np.zeros(n)
        else:
            term1 = loss.gamma * one_minus ** (loss.gamma - 1.0) * np.log(py)
        dldp = loss.alpha * (term1 - one_minus ** loss.gamma / py)
        return dldp[:, None] * py[:, None] * (onehot - probs)
    raise ValueError(f"unknown loss {loss.kind!r}")


def batch_loss(probs, labels, loss):
    """Vectorized mean loss over a batch of probability rows."""
    probs = np.asarray(probs, dtype=np.float64)
    n, c = probs.shape
    py = np.maximum(probs[np.arange(n), labels], PROB_FLOOR)
    if loss.kind == "ce":
        return float(np.mean(-np.log(py)))
    if loss.kind == "ls":
        target = np.full_like(probs, loss.eps / (c - 1))
        target[np.arange(n), labels] = 1.0 - loss.eps
        return float(np.mean(-(target * np.log(np.maximum(probs, PROB_FLOOR)))
                             .sum(axis=1)))
    if loss.kind == "focal":
        return float(np.mean(-loss.alpha * (1.0 - py) ** loss.gamma
                             * np.log(py)))
    raise ValueError(f"unknown loss {loss.kind!r}")


def loss_gradients(net, X, labels, loss):
    """Backprop: per-layer (dW, db) of the mean loss over the batch."""
    return _backprop(net, X, labels, loss)[0]


def _backprop(net, X, labels, loss):
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    # forward, keeping pre-activations
    pre, post = [], []
    a = X
    for layer in net.layers:
        z = a @ layer.weights.T
        if layer.bias is not None:
            z = z + layer.bias
        pre.append(z)
        a = _apply_activation(z, layer.activation)
        post.append(a)
    probs = softmax(post[-1])
    delta = loss_grad_logits(probs, labels, loss) / n
    grads = [None] * len(net.layers)
    for li in range(len(net.layers) - 1, -1, -1):
        inputs = X if li == 0 else post[li - 1]
        dw = delta.T @ inputs
        db = delta.sum(axis=0) if net.layers[li].bias is not None else None
        grads[li] = (dw, db)
        if li > 0:
            delta = delta @ net.layers[li].weights
            if net.layers[li - 1].activation == "relu":
                delta = delta * (pre[li - 1] > 0)
    return grads, probs


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    l2: float = 0.001
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    lr_decay: float = 0.9
    decay_every: int = 50
    freeze_backbone: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def build_network(widths, head_start, seed, bias=True, head_bias=True):
    """He-uniform initialized network with relu hidden layers, identity output."""
    rng = np.random.default_rng(seed)
    layers = []
    for li, (d_in, d_out) in enumerate(zip(widths, widths[1:])):
        limit = np.sqrt(6.0 / d_in)
        w = rng.uniform(-limit, limit, size=(d_out, d_in))
        is_last = li == len(widths) - 2
        use_bias = bias and (head_bias or li < head_start)
        b = np.zeros(d_out) if use_bias else None
        layers.append(DenseLayer(w, b, "identity" if is_last else "relu"))
    return DenseNetwork(layers, head_start)


def train_sgd(net, data, cfg, loss=None):
    """Mini-batch SGD with momentum and L2; mutates net, returns epoch history."""
    if loss is None:
        loss = LossSpec("ce")
    if data.n == 0:
        raise TrainingError("empty dataset")
    if data.feature_dim != net.feature_dim:
        raise InputShapeError("dataset/network dimension mismatch")
    rng = np.random.default_rng(cfg.seed)
    velocity = [(np.zeros_like(l.weights),
                 None if l.bias is None else np.zeros_like(l.bias))
                for l in net.layers]
    first_trainable = net.head_start if cfg.freeze_backbone else 0
    lr = cfg.learning_rate
    history = []
    for epoch in range(cfg.epochs):
        if epoch > 0 and cfg.decay_every > 0 and epoch % cfg.decay_every == 0:
            lr *= cfg.lr_decay
        perm = rng.permutation(data.n)
        epoch_loss = 0.0
        for start in range(0, data.n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            Xb, yb = data.features[idx], data.labels[idx]
            grads, probs = _backprop(net, Xb, yb, loss)
            bl = batch_loss(probs, yb, loss)
            if not np.isfinite(bl):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            epoch_loss += bl * len(idx)
            for li in range(first_trainable, len(net.layers)):
                layer = net.layers[li]
                dw, db = grads[li]
                dw = dw + cfg.l2 * layer.weights
                vw, vb = velocity[li]
                vw *= cfg.momentum
                vw += dw
                layer.weights -= lr * vw
                if layer.bias is not None:
                    vb *= cfg.momentum
                    vb += db
                    layer.bias -= lr * vb
        preds = np.argmax(logits(net, data.features), axis=1)
        acc = float(np.mean(preds == data.labels))
        history.append({"epoch": epoch, "loss": epoch_loss / data.n,
                        "accuracy": acc, "lr": lr})
    return history


# ---------------------------------------------------------------------------
# persistence: JSON with hex floats, bit-exact round trip

_FORMAT_VERSION = 1


def save_network(net, path):
    doc = {
        "version": _FORMAT_VERSION,
        "head_start": net.head_start,
        "layers": [
            {
                "shape": list(layer.weights.shape),
                "activation": layer.activation,
                "weights": [v.hex() for v in layer.weights.ravel()],
                "bias": None if layer.bias is None
                        else [v.hex() for v in layer.bias],
            }
            for layer in net.layers
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_network(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')}")
    layers = []
    for spec in doc["layers"]:
        out_d, in_d = spec["shape"]
        w = np.array([float.fromhex(v) for v in spec["weights"]],
                     dtype=np.float64).reshape(out_d, in_d)
        b = None
        if spec["bias"] is not None:
            b = np.array([float.fromhex(v) for v in spec["bias"]],
                         dtype=np.float64)
        layers.append(DenseLayer(w, b, spec["activation"]))
    return DenseNetwork(layers, doc["head_start"])
