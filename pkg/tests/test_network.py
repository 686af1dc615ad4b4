import json

import numpy as np
import pytest

from muplan.core import substream
from muplan.network import (
    AdamState,
    GeneratorNet,
    LayerSpec,
    adam_step,
    backward,
    forward,
    init_glorot,
    load_checkpoint,
    mlp,
    n_params,
    save_checkpoint,
)


def small_net(seed=0, out_act="sigmoid", heads=1):
    return init_glorot(mlp(3, (8,), 4, out_act, heads), substream(30, seed))


def test_layer_spec_validation():
    s = LayerSpec(4, 6, "relu")
    assert s.size == 4 * 6 + 6
    with pytest.raises(ValueError):
        LayerSpec(0, 3)
    with pytest.raises(ValueError):
        LayerSpec(3, 3, "tanh")
    with pytest.raises(ValueError):
        LayerSpec(3, 5, "softmax", heads=2)  # 5 not divisible by 2


def test_mlp_structure():
    layers = mlp(10, (32, 16), 8, "sigmoid")
    assert [(s.in_size, s.out_size, s.activation) for s in layers] == [
        (10, 32, "relu"),
        (32, 16, "relu"),
        (16, 8, "sigmoid"),
    ]
    assert n_params(layers) == (10 * 32 + 32) + (32 * 16 + 16) + (16 * 8 + 8)


def test_glorot_bounds_biases_and_variance():
    layers = (LayerSpec(200, 300, "relu"),)
    net = init_glorot(layers, substream(31))
    w = net.params[: 200 * 300]
    b = net.params[200 * 300 :]
    assert np.all(b == 0.0)
    limit = np.sqrt(6.0 / (200 + 300))
    assert np.all(np.abs(w) <= limit)
    # uniform(-limit, limit) variance = limit^2/3 = 2/(fan_in+fan_out)
    assert w.var() == pytest.approx(2.0 / 500, rel=0.05)


def test_forward_shapes_single_and_batch():
    net = small_net()
    y1, _ = forward(net, np.zeros(3))
    assert y1.shape == (4,)
    yb, _ = forward(net, np.zeros((5, 3)))
    assert yb.shape == (5, 4)
    # a batch of identical rows gives identical outputs
    assert np.allclose(yb, y1)


def test_forward_sigmoid_range_and_softmax_heads():
    net = small_net(out_act="sigmoid")
    y, _ = forward(net, substream(32).standard_normal(3))
    assert np.all((y > 0) & (y < 1))
    net = small_net(out_act="softmax", heads=2)
    y, _ = forward(net, substream(32).standard_normal(3))
    assert y.reshape(2, 2).sum(axis=1) == pytest.approx([1.0, 1.0])


def test_backward_matches_finite_differences():
    net = small_net(seed=1)
    x = substream(33).standard_normal(3)
    g = substream(34).standard_normal(4)

    y, tape = forward(net, x)
    grad = backward(tape, g)
    assert grad.shape == net.params.shape

    h = 1e-6
    for idx in substream(35).choice(net.params.size, 12, replace=False):
        p = net.params.copy()
        p[idx] += h
        yp, _ = forward(net.with_params(p), x)
        p[idx] -= 2 * h
        ym, _ = forward(net.with_params(p), x)
        fd = ((yp - ym) @ g) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_backward_sums_over_batch():
    net = small_net(seed=2)
    x = substream(36).standard_normal(3)
    g = substream(37).standard_normal(4)

    _, tape1 = forward(net, x)
    single = backward(tape1, g)

    xb = np.tile(x, (3, 1))
    gb = np.tile(g, (3, 1))
    _, tapeb = forward(net, xb)
    batched = backward(tapeb, gb)
    assert np.allclose(batched, 3.0 * single)


def test_tape_single_use():
    net = small_net()
    _, tape = forward(net, np.zeros(3))
    backward(tape, np.ones(4))
    with pytest.raises(ValueError):
        backward(tape, np.ones(4))


def test_backward_shape_check():
    net = small_net()
    _, tape = forward(net, np.zeros(3))
    with pytest.raises(ValueError):
        backward(tape, np.ones(5))


def test_adam_first_step_is_lr_sized():
    params = np.array([1.0])
    grad = np.array([0.5])
    new, state = adam_step(params, grad, AdamState.zeros(1), lr=0.1)
    # first Adam step moves by ~lr against the gradient sign
    assert new[0] == pytest.approx(1.0 - 0.1, rel=1e-6)
    assert state.step == 1


def test_adam_manual_two_steps():
    b1, b2, eps = 0.9, 0.999, 1e-8
    params = np.array([0.3])
    g1, g2 = np.array([0.2]), np.array([-0.4])
    p1, st = adam_step(params, g1, AdamState.zeros(1), lr=0.01)
    p2, st = adam_step(p1, g2, st, lr=0.01)

    m = (1 - b1) * g1
    v = (1 - b2) * g1**2
    ref = params - 0.01 * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
    assert p1 == pytest.approx(ref)
    m = b1 * m + (1 - b1) * g2
    v = b2 * v + (1 - b2) * g2**2
    ref = ref - 0.01 * (m / (1 - b1**2)) / (np.sqrt(v / (1 - b2**2)) + eps)
    assert p2 == pytest.approx(ref)


def test_adam_weight_decay_is_decoupled():
    params = np.array([2.0])
    grad = np.array([0.0])
    new, _ = adam_step(params, grad, AdamState.zeros(1), lr=0.1, weight_decay=0.01)
    # zero gradient: the only movement is -lr * wd * theta
    assert new[0] == pytest.approx(2.0 - 0.1 * 0.01 * 2.0)


def test_adam_does_not_mutate_inputs():
    params = np.array([1.0, 2.0])
    grad = np.array([0.1, 0.2])
    state = AdamState.zeros(2)
    adam_step(params, grad, state, lr=0.1)
    assert np.array_equal(params, [1.0, 2.0])
    assert state.step == 0
    assert np.all(state.m == 0.0)


def test_checkpoint_round_trip(tmp_path):
    net = small_net(seed=3)
    _, st = adam_step(net.params, np.ones_like(net.params), AdamState.zeros(net.params.size), 0.01)
    path = tmp_path / "ck.json"
    save_checkpoint(path, net, st, iteration=42, meta={"objective": "mu", "m": 4})
    ck = load_checkpoint(path)
    assert ck.iteration == 42
    assert ck.meta == {"objective": "mu", "m": 4}
    assert np.array_equal(ck.net.params, net.params)  # bit-exact via base64
    assert ck.net.layers == net.layers
    assert np.array_equal(ck.adam.m, st.m)
    assert ck.adam.step == 1


def test_checkpoint_bytes_stable(tmp_path):
    net = small_net(seed=4)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(p1, net, meta={"z": 1, "a": 2})
    save_checkpoint(p2, net, meta={"a": 2, "z": 1})  # key order must not matter
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_generator_net_param_size_checked():
    layers = mlp(3, (4,), 2, "linear")
    with pytest.raises(ValueError):
        GeneratorNet(layers, np.zeros(n_params(layers) + 1))
