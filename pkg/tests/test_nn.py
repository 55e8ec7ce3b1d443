import numpy as np
import pytest

from vocoderbench.acoustic import AcousticModel
from vocoderbench.nn import (KINDS, LayerSpec, Optimizer, OptimizerConfig, Param, Sequential, ShapeError,
                             build_layer, cross_entropy, gaussian_nll, load_checkpoint, log_softmax,
                             save_checkpoint, snapshot)
from vocoderbench.nn.gradcheck import gradient_check, random_spec
from vocoderbench.nn.model import CheckpointError, from_bytes, to_bytes


@pytest.mark.parametrize("kind", KINDS)
def test_gradients(kind):
    rng = np.random.default_rng(hash(kind) % 1000)
    for trial in range(3):
        rep = gradient_check(random_spec(kind, rng), seed=trial)
        assert rep.passed(1e-4), rep.errors


def test_lstm_is_causal_and_reverse_is_anticausal():
    rng = np.random.default_rng(0)
    fwd = build_layer(LayerSpec("uni_recurrent", (3, 4)), rng)
    rev = build_layer(LayerSpec("uni_recurrent", (3, 4), options={"reverse": True}), rng)
    x = rng.standard_normal((10, 3))
    y = x.copy()
    y[6:] += 1.0
    np.testing.assert_array_equal(fwd.forward(x)[:6], fwd.forward(y)[:6])
    z = x.copy()
    z[:4] += 1.0
    np.testing.assert_array_equal(rev.forward(x)[4:], rev.forward(z)[4:])


def test_causal_conv_ignores_future():
    rng = np.random.default_rng(1)
    conv = build_layer(LayerSpec("conv1d", (2, 3, 3), 2, {"causal": True}), rng)
    x = rng.standard_normal((12, 2))
    y = x.copy()
    y[8:] = 0.0
    np.testing.assert_array_equal(conv.forward(x)[:8], conv.forward(y)[:8])


def test_shape_error_names_layer():
    layer = build_layer(LayerSpec("ff_tanh", (4, 2)), np.random.default_rng(0), name="hidden0")
    with pytest.raises(ShapeError, match="hidden0"):
        layer.forward(np.zeros((3, 5)))


def test_log_softmax_and_cross_entropy():
    z = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    logp = log_softmax(z)
    np.testing.assert_allclose(np.exp(logp).sum(axis=1), 1.0)
    loss, _ = cross_entropy(logp, np.array([2, 0]))
    expected = 0.5 * (np.log(np.exp(1) + np.exp(2) + np.exp(3)) - 3 + np.log(3))
    assert loss == pytest.approx(expected)
    assert log_softmax(np.array([[1e4, 0.0]]))[0, 0] == 0.0


def test_gaussian_nll_value():
    loss, grad = gaussian_nll(np.zeros((2, 3)), np.ones((2, 3)))
    assert loss == pytest.approx(3.0 + 3.0 * np.log(2 * np.pi))
    np.testing.assert_array_equal(grad, np.ones((2, 3)))


def test_sgd_and_adam_minimise_quadratic():
    for cfg in (OptimizerConfig("sgd", 0.1, momentum=0.5), OptimizerConfig("adam", 0.1)):
        p = Param(np.array([3.0, -2.0]))
        opt = Optimizer([p], cfg)
        for _ in range(300):
            opt.zero_grad()
            p.grad += p.value
            opt.step()
        assert np.max(np.abs(p.value)) < 1e-2, cfg.kind


def test_gradient_clipping():
    p = Param(np.zeros(2))
    p.grad[...] = [30.0, 40.0]
    norm = Optimizer([p], OptimizerConfig("sgd", 1.0, momentum=0.0, clip_norm=5.0)).step()
    assert norm == pytest.approx(50.0)
    np.testing.assert_allclose(p.value, [-3.0, -4.0])


def test_checkpoint_round_trip(tmp_path):
    model = AcousticModel(5, (("mgc", 4), ("bap", 2)), {"mgc": 2, "bap": 0}, ff=(6,), bi=(3,), uni=(3,))
    model.beta.value[...] = 0.3
    sha = save_checkpoint(tmp_path / "m.ckpt", model)
    assert len(sha) == 64
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert type(back) is AcousticModel
    for (n1, p1), (n2, p2) in zip(model.parameters(), back.parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p2.value, p1.value.astype(np.float32))
    # a snapshot is already float32-exact, so a second round trip is bit-identical
    snap = snapshot(model)
    assert to_bytes(snapshot(snap)) == to_bytes(snap)


def test_corrupt_checkpoint_rejected():
    data = to_bytes(AcousticModel(3, (("mgc", 2), ("bap", 1)), None, ff=(4,), bi=(2,), uni=(2,)))
    with pytest.raises(CheckpointError):
        from_bytes(data[:-4])
    with pytest.raises(CheckpointError):
        from_bytes(b"XXXX" + data[4:])


def test_sequential_rejects_mismatched_specs():
    with pytest.raises(ShapeError):
        Sequential([LayerSpec("ff_tanh", (3, 4)), LayerSpec("ff_tanh", (5, 2))], np.random.default_rng(0))
