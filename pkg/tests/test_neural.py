import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gradcheck
from deepnoderank.neural import (LayerSpec, adam_step, backward, init_params, load_model, model_from_dict,
                                 model_to_dict, save_model)
from deepnoderank.neural.functional import activation, activation_grad, bce_grad, bce_loss, softmax
from deepnoderank.neural.layers import attention_forward, conv1d_forward, dense_forward


def test_activation_examples():
    assert activation("relu", -1.0) == 0
    assert activation("relu", 2.0) == 2
    assert activation("sigmoid", 0.0) == 0.5
    assert activation("leaky_relu", -2.0) == pytest.approx(-0.02, abs=1e-15)
    assert activation("elu", -1.0) == pytest.approx(0.01 * (math.exp(-1) - 1), abs=1e-15)
    assert activation("none", -3.0) == -3.0
    assert activation_grad("relu", 0.0) == 0


def test_sigmoid_no_overflow():
    with np.errstate(all="raise"):
        out = activation("sigmoid", np.array([-700.0, 700.0]))
    assert out[0] >= 0 and out[1] == 1.0


def test_unknown_activation():
    with pytest.raises(ValueError):
        activation("tanh", 0.0)
    with pytest.raises(ValueError):
        LayerSpec("dense", 3, "tanh")


def test_dense_examples():
    x = np.array([0.3, -2.0])
    np.testing.assert_array_equal(dense_forward({"W": np.eye(2), "b": np.zeros(2)}, x), x)
    np.testing.assert_array_equal(dense_forward({"W": np.zeros((2, 2)), "b": np.ones(2)}, x, "relu"), [1, 1])
    out = dense_forward({"W": np.array([[1.0, 1.0]]), "b": np.zeros(1)}, np.array([2.0, 3.0]), "relu")
    np.testing.assert_array_equal(out, [5])
    with pytest.raises(ValueError):
        dense_forward({"W": np.eye(3), "b": np.zeros(3)}, x)


def test_conv_examples():
    params = {"K": np.array([[1.0, 1.0]]), "b": np.zeros(1)}
    np.testing.assert_array_equal(conv1d_forward(params, [1, 2, 3, 4], pool=1), [3, 5, 7])
    np.testing.assert_array_equal(conv1d_forward(params, [1, 2, 3, 4], pool=2), [4])
    x = np.array([-1.0, 0.5, 2.0])
    ident = {"K": np.ones((1, 1)), "b": np.zeros(1)}
    np.testing.assert_array_equal(conv1d_forward(ident, x, "relu", 1), activation("relu", x))
    with pytest.raises(ValueError):
        conv1d_forward(params, [1.0])


def test_conv_default_length():
    spec = LayerSpec("conv1d", filters=2, kernel=8, pool=2)
    assert spec.output_dim(1000) == 992
    model = init_params([spec], 1000, seed=0)
    assert model.forward(np.ones(1000)).shape == (1, 992)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 4), st.integers(1, 10), st.integers(1, 5))
def test_conv_length_formula(L, f, k, p):
    if k > L or (L - k + 1) // p == 0:
        return
    rng = np.random.default_rng(L)
    params = {"K": rng.normal(size=(f, k)), "b": np.zeros(f)}
    assert conv1d_forward(params, rng.normal(size=L), pool=p).shape == (f * ((L - k + 1) // p),)


def test_attention_examples():
    x = np.array([1.0, 2.0, 4.0, -1.0])
    zero = {"W": np.zeros((4, 4)), "b": np.zeros(4)}
    np.testing.assert_allclose(attention_forward(zero, x), x / 4, atol=0)
    np.testing.assert_array_equal(softmax(np.zeros(2)), [0.5, 0.5])
    rng = np.random.default_rng(0)
    params = {"W": rng.normal(size=(4, 4)), "b": rng.normal(size=4)}
    np.testing.assert_array_equal(attention_forward(params, np.zeros(4)), np.zeros(4))


def test_softmax_properties():
    rng = np.random.default_rng(1)
    z = rng.normal(scale=50, size=(100, 7))
    s = softmax(z, axis=1)
    assert np.abs(s.sum(axis=1) - 1).max() <= 1e-12
    assert (softmax(rng.normal(size=(100, 7)), axis=1) > 0).all()


def test_bce_examples():
    assert bce_loss([1 - 1e-7], [1]) == pytest.approx(1e-7, rel=1e-3)
    assert bce_loss([0.5, 0.5], [1, 0]) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss([0.9], [0]) == pytest.approx(-math.log(0.1), abs=1e-12)
    with pytest.raises(ValueError):
        bce_loss([0.5], [1, 0])


def test_bce_batch_mean_and_nonnegative():
    rng = np.random.default_rng(2)
    p = rng.random((6, 4))
    y = (rng.random((6, 4)) < 0.5).astype(float)
    per_row = [bce_loss(p[i], y[i]) for i in range(6)]
    assert bce_loss(p, y) == pytest.approx(np.mean(per_row), abs=1e-14)
    assert bce_loss(p, y) >= 0
    assert bce_grad(p, y).shape == p.shape


def test_adam_zero_gradient_fixed_point():
    model = init_params([LayerSpec("dense", 3, "sigmoid")], 4, seed=1)
    before = model.copy()
    zeros = [{k: np.zeros_like(p) for k, p in layer.items()} for layer in model.params]
    adam_step(model, zeros)
    for a, b, m in zip(model.params, before.params, model.m):
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])
            assert not m[k].any()
    assert model.t == 1


def test_adam_first_step():
    model = init_params([LayerSpec("dense", 3, "sigmoid")], 4, seed=1)
    before = model.copy()
    rng = np.random.default_rng(3)
    grads = [{k: rng.normal(size=p.shape) for k, p in layer.items()} for layer in model.params]
    lr = 0.05
    adam_step(model, grads, lr=lr)
    for k, g in grads[0].items():
        expected = before.params[0][k] - lr * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(model.params[0][k], expected, rtol=0, atol=1e-15)


def test_adam_shape_mismatch():
    model = init_params([LayerSpec("dense", 3)], 4, seed=1)
    with pytest.raises(ValueError):
        adam_step(model, [{"W": np.zeros((2, 2)), "b": np.zeros(3)}])


def test_adam_determinism():
    specs = [LayerSpec("dense", 5, "relu"), LayerSpec("dense", 2, "sigmoid")]
    a, b = init_params(specs, 6, seed=9), init_params(specs, 6, seed=9)
    rng = np.random.default_rng(0)
    for _ in range(10):
        X = rng.normal(size=(4, 6))
        Y = (rng.random((4, 2)) < 0.5).astype(float)
        adam_step(a, backward(a, X, Y)[1])
        adam_step(b, backward(b, X, Y)[1])
    for pa, pb in zip(a.params, b.params):
        for k in pa:
            np.testing.assert_array_equal(pa[k], pb[k])
    X = rng.normal(size=(3, 6))
    np.testing.assert_array_equal(a.forward(X), b.forward(X))


def test_backward_scalar_symbolic():
    # p = sigmoid(w x + b); dL/dw = (p - y) x; dL/db = p - y
    model = init_params([LayerSpec("dense", 1, "sigmoid")], 1, seed=0)
    model.params[0]["W"][:] = 0.7
    model.params[0]["b"][:] = -0.2
    x, y = 1.5, 1.0
    p = 1 / (1 + math.exp(-(0.7 * x - 0.2)))
    _, grads = backward(model, [[x]], [[y]])
    assert grads[0]["W"][0, 0] == pytest.approx((p - y) * x, rel=1e-12)
    assert grads[0]["b"][0] == pytest.approx(p - y, rel=1e-12)


def test_backward_duplicated_rows():
    specs = [LayerSpec("dense", 4, "relu"), LayerSpec("dense", 2, "sigmoid")]
    model = init_params(specs, 3, seed=4)
    x = np.array([[0.2, -1.0, 0.7]])
    y = np.array([[1.0, 0.0]])
    l1, g1 = backward(model, x, y)
    l2, g2 = backward(model, np.repeat(x, 3, 0), np.repeat(y, 3, 0))
    assert l1 == pytest.approx(l2, abs=1e-15)
    for a, b in zip(g1, g2):
        for k in a:
            np.testing.assert_allclose(a[k], b[k], rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("cases", ["dense_cases", "conv_cases", "attention_cases", "composed_cases"])
def test_gradient_check(cases):
    errs = list(getattr(gradcheck, cases)(30))
    assert max(errs) <= 1e-4


def test_init():
    specs = [LayerSpec("dense", 5, "relu"), LayerSpec("dense", 2, "sigmoid")]
    a, b = init_params(specs, 7, seed=3), init_params(specs, 7, seed=3)
    for pa, pb in zip(a.params, b.params):
        np.testing.assert_array_equal(pa["W"], pb["W"])
        assert not pa["b"].any()
    assert np.abs(a.params[0]["W"]).max() <= math.sqrt(6 / 12)
    assert np.abs(a.params[1]["W"]).max() <= math.sqrt(6 / 7)
    assert a.n_params == 5 * 7 + 5 + 2 * 5 + 2
    conv = init_params([LayerSpec("conv1d", filters=2, kernel=8, pool=2)], 20, seed=0)
    assert np.abs(conv.params[0]["K"]).max() <= math.sqrt(6 / (8 + 16))


def test_init_rejects_inconsistent_dims():
    with pytest.raises(ValueError):
        init_params([LayerSpec("conv1d", filters=2, kernel=8, pool=2)], 5, seed=0)


def test_checkpoint_round_trip(tmp_path):
    specs = [LayerSpec("attention_gate"), LayerSpec("conv1d", filters=2, kernel=3, pool=2),
             LayerSpec("dense", 3, "relu"), LayerSpec("dense", 2, "sigmoid")]
    model = init_params(specs, 9, seed=11)
    X = np.random.default_rng(0).normal(size=(2, 9))
    adam_step(model, backward(model, X, [[1, 0], [0, 1]])[1])
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.specs == model.specs and back.t == 1
    np.testing.assert_array_equal(back.forward(X), model.forward(X))
    for a, b in zip(back.v, model.v):
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])
    d = model_to_dict(model)
    d["format_version"] = 99
    with pytest.raises(ValueError):
        model_from_dict(d)
