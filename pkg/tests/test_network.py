import numpy as np
import pytest

from visreg import conv_core, network
from visreg.config import DATASET_SHAPES, PRESETS, expand_architecture
from visreg.verification import fd_params, rel_error

from conftest import GOLDEN, tiny_model

LAP = conv_core.laplacian()


@pytest.mark.parametrize("tok,expected", [
    ("fc(1000)", network.dense(1000)),
    ("fc(8):tanh", network.dense(8, "tanh")),
    ("out(10)", network.output(10)),
    ("output(10)", network.output(10)),
    ("conv(3x3, 64)", network.conv(3, 64)),
    ("conv(5×5, 64)", network.conv(5, 64)),
    ("maxpool(3,3)", network.maxpool(3)),
    ("maxpool(2x2)", network.maxpool(2)),
    ("dropout(0.3)", network.dropout(0.3)),
    ("input(28x28)", ("input", (28, 28))),
    ("input(784)", ("input", (784,))),
])
def test_parse_token(tok, expected):
    assert network.parse_token(tok) == expected


@pytest.mark.parametrize("tok", ["fc()", "conv(3x4, 8)", "pool(2)", "dropout(1.0)", "fc(0)", "fc(3):gelu"])
def test_parse_token_rejects(tok):
    with pytest.raises(ValueError):
        network.parse_token(tok)


def test_format_roundtrip():
    text = "input(28x28) -- conv(3x3, 8):tanh -- maxpool(2x2) -- dropout(0.1) -- fc(16) -- output(10)"
    dims, layers = network.parse_architecture(text)
    assert network.format_architecture(layers, dims) == text


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_shapes_golden(name):
    shape = DATASET_SHAPES["cifar10" if name.startswith("cifar") else "mnist"]
    dims, layers = expand_architecture(name)
    lines = [network.format_architecture(layers, dims)]
    lines += [f"{l.token():<18} {'x'.join(map(str, s))}"
              for l, s in zip(layers, network.infer_shapes(layers, shape))]
    assert "\n".join(lines) + "\n" == (GOLDEN / f"{name}.txt").read_text()


def test_valid_conv_too_small():
    layers = [network.conv(5, 4), network.conv(5, 4), network.conv(5, 4), network.dense(3),
              network.output(2)]
    with pytest.raises(network.ShapeError):
        network.infer_shapes(layers, (1, 10, 10))


def test_stack_checks():
    with pytest.raises(ValueError, match="last layer"):
        network.validate_stack([network.dense(3)], (1, 4, 4))
    with pytest.raises(ValueError, match="no dense"):
        network.validate_stack([network.conv(3, 2), network.output(2)], (1, 4, 4))
    with pytest.raises(ValueError, match="spatial"):
        # second dense layer sees a flat vector
        network.validate_stack([network.dense(3), network.dense(3), network.output(2)], (1, 4, 4), 1)
    _, vr = network.validate_stack([network.conv(3, 2), network.dense(3), network.output(2)], (1, 5, 5))
    assert vr == 1


def test_glorot_bounds_and_zero_bias():
    m = network.build_model([network.dense(50), network.output(10)], (1, 28, 28), seed=3)
    lim = np.sqrt(6.0 / (784 + 50))
    assert np.abs(m.params[0]["W"]).max() <= lim
    assert np.abs(m.params[0]["W"]).max() > 0.9 * lim
    assert not m.params[0]["b"].any()
    assert m == network.build_model([network.dense(50), network.output(10)], (1, 28, 28), seed=3)


def test_forward_outputs_are_probabilities(rng):
    m = network.build_model([network.conv(3, 2, padding="same"), network.maxpool(2),
                             network.dense(5), network.output(4)], (1, 5, 5))
    out = network.forward(m, rng.random((6, 1, 5, 5))).outputs
    assert out.shape == (6, 4)
    assert np.allclose(out.sum(axis=1), 1.0)
    assert m.shapes[:2] == [(2, 5, 5), (2, 3, 3)]


def test_maxpool_ceil_windows():
    m = network.build_model([network.maxpool(2), network.dense(1), network.output(2)], (1, 3, 3))
    x = np.arange(9.0).reshape(1, 1, 3, 3)
    pooled = network.forward(m, x, upto=0).post[0]
    assert np.array_equal(pooled[0, 0], [[4.0, 5.0], [7.0, 8.0]])


def test_dropout_eval_scales_and_train_masks(rng):
    m = network.build_model([network.dropout(0.25), network.dense(3), network.output(2)], (1, 2, 2))
    x = np.ones((2, 1, 2, 2))
    assert np.array_equal(network.forward(m, x, "eval", upto=0).post[0], 0.75 * x)
    masked = network.forward(m, np.ones((500, 1, 2, 2)), "train", rng, upto=0).post[0]
    assert set(np.unique(masked)) <= {0.0, 1.0}
    assert 0.65 < masked.mean() < 0.85
    with pytest.raises(ValueError, match="rng"):
        network.forward(m, x, "train")


def test_class_loss_floor():
    out = np.array([[1.0, 0.0], [0.5, 0.5]])
    assert network.class_loss(out, [1, 0]) == pytest.approx((-np.log(1e-12) - np.log(0.5)) / 2)
    g = network._class_logit_grad(out, np.array([1, 0]))
    assert not g[0].any()


def test_l2_prime_excludes_vr_layer():
    m = tiny_model()
    assert network.l2_prime(m) == pytest.approx(np.sum(m.params[1]["W"] ** 2))
    g = network.l2_grad(m)
    assert g[0] is None and np.array_equal(g[1]["W"], 2 * m.params[1]["W"])


def _fd_check(model, batch, mu1, mu2, lam, mode="eval", seed=None):
    mk = (lambda: np.random.default_rng(seed)) if seed is not None else (lambda: None)
    cache = network.forward(model, batch.inputs, mode, mk())
    grads = network.backward(model, batch, LAP, mu1, mu2, lam, cache)
    num = fd_params(model, lambda: network.total_loss(model, batch, LAP, mu1, mu2, lam, mode, mk()))
    worst = 0.0
    for g, n in zip(grads, num):
        if g is not None:
            worst = max(worst, *(rel_error(g[k], n[k]) for k in g))
    return worst


def test_backprop_fd_conv_same_pool_sigmoid(rng):
    m = network.build_model([network.conv(3, 2, "tanh", "same"), network.maxpool(2),
                             network.dense(4, "sigmoid"), network.output(3)], (2, 5, 5), seed=1)
    batch = network.Batch(rng.random((3, 2, 5, 5)), [0, 1, 2])
    assert _fd_check(m, batch, 0.01, 0.03, 0.02) <= 1e-5


def test_backprop_fd_with_dropout_mask(rng):
    m = network.build_model([network.dense(5, "tanh"), network.dropout(0.4), network.output(3)],
                            (1, 3, 4), seed=2)
    batch = network.Batch(rng.random((4, 1, 3, 4)), [0, 1, 2, 0])
    assert _fd_check(m, batch, 0.0, 0.05, 0.01, mode="train", seed=7) <= 1e-5


def test_vr_on_second_dense_after_conv(rng):
    m = network.build_model([network.conv(3, 2, "tanh"), network.dense(3, "tanh"), network.output(2)],
                            (1, 5, 5), seed=0)
    assert m.vr_layer == 1 and m.vr_geometry == (2, 3, 3)
    batch = network.Batch(rng.random((2, 1, 5, 5)), [0, 1])
    assert _fd_check(m, batch, 0.02, 0.02, 0.02) <= 1e-5


def test_stale_cache(rng):
    m = tiny_model()
    batch = network.Batch(rng.random((2, 1, 3, 3)), [0, 1])
    cache = network.forward(m, batch.inputs)
    m.version += 1
    with pytest.raises(network.StaleCacheError):
        network.backward(m, batch, LAP, cache=cache)
    cache = network.forward(m, batch.inputs)
    other = network.Batch(batch.inputs + 1.0, batch.labels)
    with pytest.raises(network.StaleCacheError):
        network.backward(m, other, LAP, cache=cache)


def test_zero_weights_combine_matches_classification(rng):
    m = tiny_model()
    batch = network.Batch(rng.random((3, 1, 3, 3)), [0, 1, 2])
    cache = network.forward(m, batch.inputs)
    g = network.backward(m, batch, LAP, cache=cache)
    u = network.classification_grad(m, batch, cache)
    for a, b in zip(g, u):
        assert np.array_equal(a["W"], b["W"])


def test_input_shape_mismatch():
    with pytest.raises(network.ShapeError, match="expected"):
        network.forward(tiny_model(), np.zeros((1, 1, 4, 4)))


def test_node_activation_gradient(rng):
    m = tiny_model(act="tanh")
    x = rng.standard_normal((1, 3, 3))
    v, g = network.node_activation(m, x, 0, 2)
    w = m.params[0]["W"][2]
    assert v == pytest.approx(np.tanh(w @ x.ravel()))
    assert np.allclose(g.ravel(), (1 - v * v) * w)


def test_checkpoint_roundtrip(tmp_path):
    m = network.build_model([network.conv(3, 2, "sigmoid", "same"), network.dropout(0.2),
                             network.dense(4), network.output(3)], (1, 5, 5), seed=5)
    path = tmp_path / "m.npz"
    network.save_model(m, path)
    back = network.load_model(path)
    assert back == m
    assert back.layers == m.layers and back.vr_layer == m.vr_layer


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, header=np.array('{"format": "other"}'))
    with pytest.raises(ValueError, match="not a"):
        network.load_model(path)
