import os

import numpy as np
import pytest

import gsto

rng = np.random.default_rng(7)


def sigma(x):
    return 1.0 / (1.0 + np.exp(-x))


def conv1x1(f, w, b):
    return np.einsum("km,nmhw->nkhw", w[:, :, 0, 0], f) + b.reshape(1, -1, 1, 1)


def pool(x, k):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))


# ---- primitive ops


def test_conv2d_matches_direct_sum():
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    y = gsto.conv2d(x, w, b, padding=1)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 6, 6))
    for i in range(6):
        for j in range(6):
            ref[:, :, i, j] = np.einsum("nchw,kchw->nk", xp[:, :, i:i + 3, j:j + 3], w) + b
    np.testing.assert_allclose(y, ref, rtol=1e-12, atol=1e-12)


def test_pointwise_and_pooling():
    x = rng.standard_normal((1, 2, 8, 8))
    np.testing.assert_array_equal(gsto.relu(x), np.maximum(x, 0))
    np.testing.assert_allclose(gsto.sigmoid(x), sigma(x), rtol=1e-14)
    np.testing.assert_allclose(gsto.avg_pool_down(x, 4), pool(x, 4), rtol=1e-13)
    np.testing.assert_allclose(gsto.adaptive_avg_pool(x, 1, 1), x.mean(axis=(2, 3), keepdims=True),
                               rtol=1e-13)
    const = np.full((1, 2, 4, 4), 1.5)
    np.testing.assert_allclose(gsto.bilinear_upsample(const, 16, 16), np.full((1, 2, 16, 16), 1.5))


def test_batch_norm_eval():
    x = rng.standard_normal((2, 3, 4, 4))
    gamma, beta = rng.standard_normal((2, 1, 3, 1, 1))
    mean, var = rng.standard_normal((1, 3, 1, 1)), rng.uniform(0.5, 2, (1, 3, 1, 1))
    y = gsto.batch_norm_eval(x, gamma, beta, mean, var, eps=1e-5)
    np.testing.assert_allclose(y, gamma * (x - mean) / np.sqrt(var + 1e-5) + beta, rtol=1e-12, atol=1e-12)


def test_shape_errors_surface_as_python_exceptions():
    with pytest.raises(gsto.ShapeError):
        gsto.avg_pool_down(np.zeros((1, 1, 6, 6)), 4)
    with pytest.raises(gsto.ShapeError):
        gsto.apply_gate(np.zeros((1, 2, 4, 4)), np.zeros((1, 1, 2, 2)))


# ---- gates and transfer


def test_unsupervised_gate():
    f = rng.standard_normal((2, 5, 4, 4))
    w, b = rng.standard_normal((1, 5, 1, 1)), rng.standard_normal(1)
    g = gsto.gate_unsupervised(f, w, b)
    assert g.shape == (2, 1, 4, 4)
    np.testing.assert_allclose(g, sigma(conv1x1(f, w, b)), rtol=1e-12)
    assert np.all((g > 0) & (g < 1))


def test_supervised_gate():
    f = rng.standard_normal((1, 5, 4, 4))
    pw, pb = rng.standard_normal((4, 5, 1, 1)), rng.standard_normal(4)
    tw, tb = rng.standard_normal((1, 4, 1, 1)), rng.standard_normal(1)
    g, p = gsto.gate_supervised(f, pw, pb, tw, tb)
    np.testing.assert_allclose(p, conv1x1(f, pw, pb), rtol=1e-12)
    np.testing.assert_allclose(g, sigma(conv1x1(p, tw, tb)), rtol=1e-12)


def test_gated_transfer_and_unit_gate_recovery():
    f = rng.standard_normal((2, 4, 8, 8))
    w, b = rng.standard_normal((6, 4, 1, 1)), rng.standard_normal(6)
    gate = rng.uniform(0, 1, (2, 1, 8, 8))
    out = gsto.scale_transfer(f, 4, 4, w, b, gate=gate)
    np.testing.assert_allclose(out, pool(conv1x1(gate * f, w, b), 2), rtol=1e-12, atol=1e-13)
    ones = np.ones((2, 1, 8, 8))
    for side in (4, 8, 16):
        np.testing.assert_array_equal(gsto.scale_transfer(f, side, side, w, b, gate=ones),
                                      gsto.scale_transfer(f, side, side, w, b))
    np.testing.assert_array_equal(gsto.apply_gate(f, ones), f)


def test_gate_param_counts():
    assert gsto.gate_param_count(16, 4, "none") == 0
    assert gsto.gate_param_count(16, 4, "unsup") == 17
    assert gsto.gate_param_count(16, 4, "sup") == 16 * 4 + 4 + 4 + 1


# ---- network


@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_network_unit_override_recovers_baseline(dtype):
    full = gsto.Network("full", width=4, blocks=1, size=32, dtype=dtype)
    plain = gsto.Network("baseline", width=4, blocks=1, size=32, dtype=dtype)
    image = rng.standard_normal((2, 3, 32, 32)).astype(dtype)
    a = full.forward(image, gate_override=1.0)
    assert a.shape == (2, 4, 32, 32)
    assert a.dtype == np.dtype(dtype)
    np.testing.assert_array_equal(a, plain.forward(image))
    assert not np.array_equal(full.forward(image), a)


def test_network_params_and_checkpoint(tmp_path):
    net = gsto.Network("full", width=8, blocks=1, size=32)
    plain = gsto.Network("baseline", width=8, blocks=1, size=32)
    assert net.gate_param_count > 0
    assert plain.gate_param_count == 0
    assert net.inference_param_count == plain.inference_param_count + net.gate_param_count
    assert net.inference_param_count <= net.param_count
    assert len(net.gate_sites) > 0
    names = net.param_names()
    assert len(names) == len(set(names))
    path = str(tmp_path / "net.gst")
    net.save(path)
    other = gsto.Network("full", width=8, blocks=1, size=32, seed=99)
    assert other.checkpoint_bytes() != net.checkpoint_bytes()
    other.load(path)
    assert other.checkpoint_bytes() == net.checkpoint_bytes()
    np.testing.assert_array_equal(other.get_param(names[0]), net.get_param(names[0]))


def test_trace_exposes_gates():
    net = gsto.Network("full", width=4, blocks=1, size=32)
    maps = net.trace(np.zeros((1, 3, 32, 32), dtype=np.float32))
    gates = [k for k in maps if k.endswith("_gate")]
    assert len(gates) == len(net.gate_sites)
    for k in gates:
        assert maps[k].shape[1] == 1
        assert np.all((maps[k] >= 0) & (maps[k] <= 1))


# ---- data, metrics, loss


def test_synthetic_scene():
    image, labels = gsto.synth_generate(3, 32, 32, seed=5)
    assert image.shape == (1, 3, 32, 32) and image.dtype == np.float32
    assert labels.shape == (1, 32, 32) and labels.dtype == np.int32
    assert set(np.unique(labels)) <= {0, 1, 2, 3}
    again, _ = gsto.synth_generate(3, 32, 32, seed=5)
    np.testing.assert_array_equal(image, again)


def test_metrics():
    mean, per_class = gsto.miou(np.array([[0, 1]]), np.array([[0, 0]]), classes=2)
    assert mean == 0.25
    assert per_class == [0.5, 0.0]
    labels = rng.integers(0, 4, (2, 8, 8))
    assert gsto.miou(labels, labels, 4)[0] == 1.0
    assert gsto.pixel_accuracy(labels, labels) == 1.0
    pred = labels.copy()
    pred[0, 0, 0] = (pred[0, 0, 0] + 1) % 4
    assert gsto.pixel_accuracy(pred, labels) == pytest.approx(127 / 128, abs=1e-15)


def test_cross_entropy_and_total_loss():
    logits = np.zeros((1, 19, 2, 2))
    assert gsto.cross_entropy(logits, np.zeros((1, 2, 2), dtype=np.int32)) == pytest.approx(np.log(19), abs=1e-12)
    assert gsto.total_loss(1.0, [1.0, 1.0, 1.0]) == 2.0
    assert gsto.total_loss(1.0, [1.0, 1.0, 1.0], drop_loss1=True) == pytest.approx(1.8, abs=1e-15)
    assert gsto.total_loss(0.7, [None, None, None], weights=(0, 0, 0, 1)) == 0.7
    with pytest.raises(ValueError):
        gsto.total_loss(0.7, [None, 1.0, 1.0])


def test_poly_lr():
    assert gsto.poly_lr(0.01, 0, 100) == 0.01
    assert gsto.poly_lr(0.01, 50, 100) == pytest.approx(0.01 * 0.5 ** 0.9, rel=1e-14)
    assert gsto.poly_lr(0.01, 100, 100) == 0.0


def test_tensor_file_round_trip(tmp_path):
    a = rng.standard_normal((2, 3, 4, 5))
    path = str(tmp_path / "a.gst")
    gsto.save_tensor(path, a)
    np.testing.assert_array_equal(gsto.load_tensor(path), a)
    with pytest.raises(gsto.FormatError):
        gsto.load_tensor(str(tmp_path / "missing.gst"))


# ---- experiments


def test_config_resolution():
    assert "optim.lr" in gsto.config_keys()
    text = gsto.resolve_config({"optim.lr": "0.25", "net.width": "4"})
    assert "optim.lr = 0.25" in text
    with pytest.raises(gsto.ConfigError):
        gsto.resolve_config({"no.such": "1"})


def test_tiny_training_run(tmp_path):
    settings = {"net.width": 4, "net.blocks": 1, "data.height": 32, "data.width": 32,
                "data.n_train": 4, "data.n_val": 2, "optim.iters": 2, "optim.batch": 2,
                "log.train_images": 0, "out": str(tmp_path)}
    a = gsto.train(settings)
    b = gsto.train(settings)
    assert a["iters"] == 2
    assert np.isfinite(a["final_loss"])
    assert a["final_loss"] == b["final_loss"]
    assert os.path.exists(tmp_path / "checkpoint.gst")


def test_per_op_audit():
    passed, checks, report = gsto.per_op_audit()
    assert passed, report
    assert checks > 10
