import numpy as np
import pytest

from conftest import tiny_dataset
from srcal.network import (DenseLayer, DenseNetwork, InputShapeError, LossSpec,
                           NumericError, TrainConfig, batch_loss,
                           build_network, forward, forward_batch,
                           load_network, logits, loss_cross_entropy,
                           loss_focal, loss_gradients, loss_label_smoothing,
                           save_network, softmax, train_sgd)

LOSSES = [LossSpec("ce"), LossSpec("ls", eps=0.05),
          LossSpec("focal", alpha=1.0, gamma=1.0)]


def _random_net(rng, widths=None, head_start=1, bias=True):
    if widths is None:
        depth = int(rng.integers(2, 5))
        widths = [int(rng.integers(2, 7)) for _ in range(depth + 1)]
    net = build_network(widths, head_start, int(rng.integers(1 << 30)),
                        bias=bias)
    # random biases keep pre-activations off the exact relu kink, where the
    # analytic subgradient and a central difference legitimately disagree
    for layer in net.layers:
        if layer.bias is not None:
            layer.bias[:] = rng.normal(scale=0.3, size=layer.bias.shape)
    return net, widths


def test_forward_matches_manual_computation():
    w1 = np.array([[1.0, -2.0], [0.5, 0.0]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[1.0, 1.0]])
    net = DenseNetwork([DenseLayer(w1, b1, "relu"),
                        DenseLayer(w2, None, "identity")], head_start=0)
    x = np.array([1.0, 0.5])
    h = np.maximum(w1 @ x + b1, 0.0)
    expect = w2 @ h
    acts = forward(net, x)
    assert np.array_equal(acts[-1], expect)
    assert np.array_equal(forward_batch(net, x[None, :])[-1][0], expect)


def test_forward_rejects_bad_shapes():
    net = build_network([3, 4, 2], 1, 0)
    with pytest.raises(InputShapeError):
        forward(net, np.zeros(4))
    with pytest.raises(InputShapeError):
        forward_batch(net, np.zeros((5, 4)))


def test_softmax_rows_sum_to_one_and_shift_invariant():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(50, 6)) * 50
    p = softmax(z)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(softmax(z + 123.0), p, atol=1e-12)
    with pytest.raises(NumericError):
        softmax(np.array([[np.inf, 0.0]]))


def test_scalar_losses_reduce_to_cross_entropy():
    p = np.array([0.7, 0.2, 0.1])
    assert loss_cross_entropy(p, 0) == pytest.approx(-np.log(0.7))
    # zero smoothing is plain cross-entropy
    assert loss_label_smoothing(p, 0, 0.0) == pytest.approx(-np.log(0.7))
    # gamma = 0, alpha = 1 is plain cross-entropy
    assert loss_focal(p, 0, 1.0, 0.0) == pytest.approx(-np.log(0.7))


def test_batch_loss_matches_scalar_losses():
    rng = np.random.default_rng(5)
    raw = rng.random((20, 4)) + 1e-9
    probs = raw / raw.sum(axis=1, keepdims=True)
    labels = rng.integers(0, 4, size=20)
    for loss in LOSSES:
        mean = np.mean([loss.evaluate(probs[i], labels[i]) for i in range(20)])
        assert batch_loss(probs, labels, loss) == pytest.approx(mean, rel=1e-12)


@pytest.mark.parametrize("loss", LOSSES, ids=[l.kind for l in LOSSES])
def test_gradients_match_finite_differences(loss):
    rng = np.random.default_rng(11)
    for _ in range(10):
        net, widths = _random_net(rng)
        n = int(rng.integers(2, 6))
        X = rng.normal(size=(n, widths[0]))
        y = rng.integers(0, widths[-1], size=n)
        grads = loss_gradients(net, X, y, loss)

        def total_loss():
            return batch_loss(softmax(logits(net, X)), y, loss)

        h = 1e-6
        for li, layer in enumerate(net.layers):
            dw, db = grads[li]
            flat_idx = rng.integers(0, layer.weights.size, size=4)
            for f in flat_idx:
                j, i = np.unravel_index(f, layer.weights.shape)
                keep = layer.weights[j, i]
                layer.weights[j, i] = keep + h
                up = total_loss()
                layer.weights[j, i] = keep - h
                down = total_loss()
                layer.weights[j, i] = keep
                fd = (up - down) / (2 * h)
                assert dw[j, i] == pytest.approx(fd, rel=1e-4, abs=1e-7)
            if layer.bias is not None:
                j = int(rng.integers(0, layer.bias.size))
                keep = layer.bias[j]
                layer.bias[j] = keep + h
                up = total_loss()
                layer.bias[j] = keep - h
                down = total_loss()
                layer.bias[j] = keep
                fd = (up - down) / (2 * h)
                assert db[j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_training_reduces_loss_and_fits_separable_data():
    rng = np.random.default_rng(2)
    centers = np.array([[3.0, 3.0], [-3.0, -3.0]])
    labels = rng.integers(0, 2, size=200)
    feats = centers[labels] + rng.normal(scale=0.3, size=(200, 2))
    from srcal.data import LabeledDataset
    data = LabeledDataset(feats, labels, 2)
    net = build_network([2, 8, 2], 1, 0)
    hist = train_sgd(net, data, TrainConfig(learning_rate=0.05, l2=0.0,
                                            epochs=20, seed=0))
    assert hist[-1]["loss"] < hist[0]["loss"]
    assert hist[-1]["accuracy"] > 0.95


def test_freeze_backbone_keeps_backbone_hash():
    rng = np.random.default_rng(4)
    data = tiny_dataset(rng, n=60, dim=4, classes=3)
    net = build_network([4, 6, 5, 3], 2, 9)
    before = net.backbone_hash()
    train_sgd(net, data, TrainConfig(epochs=2, seed=0, freeze_backbone=True))
    assert net.backbone_hash() == before
    # and without the freeze the backbone moves
    net2 = build_network([4, 6, 5, 3], 2, 9)
    train_sgd(net2, data, TrainConfig(epochs=2, seed=0))
    assert net2.backbone_hash() != before


def test_lr_decay_schedule_is_applied():
    rng = np.random.default_rng(6)
    data = tiny_dataset(rng, n=30)
    net = build_network([4, 4, 3], 1, 0)
    hist = train_sgd(net, data, TrainConfig(learning_rate=0.1, epochs=5,
                                            lr_decay=0.5, decay_every=2,
                                            seed=0))
    lrs = [h["lr"] for h in hist]
    assert lrs == [0.1, 0.1, 0.05, 0.05, 0.025]


def test_save_load_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    net, widths = _random_net(rng)
    # make some weights awkward
    net.layers[0].weights[0, 0] = np.nextafter(1.0, 2.0)
    path = tmp_path / "net.json"
    save_network(net, str(path))
    loaded = load_network(str(path))
    assert loaded.head_start == net.head_start
    for a, b in zip(net.layers, loaded.layers):
        assert np.array_equal(a.weights, b.weights)
        assert a.activation == b.activation
        if a.bias is None:
            assert b.bias is None
        else:
            assert np.array_equal(a.bias, b.bias)
    assert loaded.weights_hash() == net.weights_hash()


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
