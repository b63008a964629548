"""Tests for the autodiff tape, MLP utilities, Adam, and checkpoints."""

import numpy as np
import pytest
from scipy.special import logsumexp as scipy_logsumexp

from contextrl.approx import (
    MlpSpec,
    OptState,
    ParamSet,
    adam_step,
    autodiff as ad,
    ema_update,
    finite_diff_check,
    load_params,
    mlp_forward,
    mlp_forward_nodes,
    mlp_init,
    save_params,
    value_and_grad,
)
from contextrl.errors import ConfigurationError, NumericError, ShapeError


def test_sum_of_squares_gradient_matches_hand_result():
    # d/dx sum(x^2) = 2x
    x = ad.Node(np.array([1.0, 2.0, 3.0]))
    loss = (x * x).sum()
    ad.backward(loss)
    assert float(loss.value) == 14.0
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0], rtol=0, atol=0)


def test_matmul_gradient_matches_hand_result():
    # f = sum(A @ B); dA = ones @ B^T, dB = A^T @ ones
    a = ad.Node(np.array([[1.0, 2.0], [3.0, 4.0]]))
    b = ad.Node(np.array([[5.0, 6.0], [7.0, 8.0]]))
    loss = (a @ b).sum()
    ad.backward(loss)
    ones = np.ones((2, 2))
    np.testing.assert_allclose(a.grad, ones @ b.value.T)
    np.testing.assert_allclose(b.grad, a.value.T @ ones)


def test_shared_node_accumulates_both_paths():
    # f = x*x + 3x at x=2 -> df/dx = 2x + 3 = 7
    x = ad.Node(np.array(2.0))
    loss = x * x + 3.0 * x
    ad.backward(loss)
    assert float(loss.value) == pytest.approx(10.0)
    assert float(x.grad) == pytest.approx(7.0)


def test_broadcast_add_unbroadcasts_bias_gradient():
    x = ad.Node(np.zeros((4, 3)))
    b = ad.Node(np.array([1.0, 2.0, 3.0]))
    loss = (x + b).sum()
    ad.backward(loss)
    np.testing.assert_allclose(b.grad, [4.0, 4.0, 4.0])


def test_getitem_gradient_scatters_with_repeats():
    x = ad.Node(np.array([1.0, 2.0, 3.0]))
    idx = np.array([0, 0, 2])
    loss = x[idx].sum()
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, [2.0, 0.0, 1.0])


def test_minimum_routes_gradient_to_smaller_branch():
    a = ad.Node(np.array([1.0, 5.0]))
    b = ad.Node(np.array([2.0, 3.0]))
    loss = ad.minimum(a, b).sum()
    ad.backward(loss)
    np.testing.assert_allclose(a.grad, [1.0, 0.0])
    np.testing.assert_allclose(b.grad, [0.0, 1.0])


def test_clip_gradient_mask_includes_boundaries():
    x = ad.Node(np.array([-3.0, -2.0, 0.0, 2.0, 3.0]))
    loss = ad.clip(x, -2.0, 2.0).sum()
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, [0.0, 1.0, 1.0, 1.0, 0.0])


def test_tile_rows_gradient_sums_over_rows():
    v = ad.Node(np.array([1.0, 2.0]))
    tiled = ad.tile_rows(v, 3)
    weights = ad.constant(np.arange(6.0).reshape(3, 2))
    loss = (tiled * weights).sum()
    ad.backward(loss)
    np.testing.assert_allclose(v.grad, [0.0 + 2.0 + 4.0, 1.0 + 3.0 + 5.0])


def test_logsumexp_matches_scipy_and_survives_large_inputs():
    rng = np.random.default_rng(0)
    scores = rng.normal(size=8) * 3.0
    node = ad.logsumexp(ad.Node(scores))
    assert float(node.value) == pytest.approx(scipy_logsumexp(scores), abs=1e-12)
    huge = ad.logsumexp(ad.Node(np.array([1000.0, 1000.0])))
    assert float(huge.value) == pytest.approx(1000.0 + np.log(2.0), abs=1e-9)


def test_logsumexp_gradient_is_softmax():
    scores = np.array([0.5, -1.0, 2.0])
    x = ad.Node(scores)
    ad.backward(ad.logsumexp(x))
    soft = np.exp(scores) / np.exp(scores).sum()
    np.testing.assert_allclose(x.grad, soft, atol=1e-12)


def test_quadratic_finite_difference_error_is_tiny():
    # For a quadratic, central differences are exact up to roundoff.
    params = ParamSet({"x": np.array([0.3, -0.7, 1.1])})

    def loss_fn(nodes):
        x = nodes["x"]
        return (x * x).sum() + 2.0 * x.sum()

    err = finite_diff_check(loss_fn, params, np.random.default_rng(1))
    assert err < 1e-7


def test_mlp_finite_difference_error_under_tolerance():
    spec = MlpSpec((4, 16, 16, 3), activation="tanh")
    params = mlp_init(spec, seed=7)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 3))

    def loss_fn(nodes):
        out = mlp_forward_nodes(spec, nodes, ad.constant(x))
        diff = out - ad.constant(target)
        return (diff * diff).mean()

    err = finite_diff_check(loss_fn, params, np.random.default_rng(3))
    assert err < 1e-4


def test_relu_mlp_finite_difference_error_under_tolerance():
    spec = MlpSpec((3, 8, 2), activation="relu")
    params = mlp_init(spec, seed=11)
    x = np.random.default_rng(4).normal(size=(6, 3))

    def loss_fn(nodes):
        out = mlp_forward_nodes(spec, nodes, ad.constant(x))
        return (out * out).mean()

    err = finite_diff_check(loss_fn, params, np.random.default_rng(5))
    assert err < 1e-4


def test_value_and_grad_rejects_nonfinite_loss():
    params = ParamSet({"x": np.array([0.0])})

    def loss_fn(nodes):
        return ad.log(nodes["x"]).sum()

    with np.errstate(divide="ignore"):
        with pytest.raises(NumericError):
            value_and_grad(loss_fn, params)


def test_constant_nodes_receive_no_parameter_gradient():
    params = ParamSet({"x": np.array([1.0, 2.0])})

    def loss_fn(nodes):
        frozen = ad.constant(nodes["x"].value)
        return (frozen * frozen).sum() + nodes["x"].sum()

    _, grads = value_and_grad(loss_fn, params)
    np.testing.assert_allclose(grads["x"], [1.0, 1.0])


def test_mlp_init_zero_bias_and_fan_in_bound():
    spec = MlpSpec((10, 20, 5))
    params = mlp_init(spec, seed=0)
    assert params.names() == ["w0", "b0", "w1", "b1"]
    np.testing.assert_array_equal(params["b0"], 0.0)
    np.testing.assert_array_equal(params["b1"], 0.0)
    assert np.max(np.abs(params["w0"])) <= np.sqrt(6.0 / 10)
    assert np.max(np.abs(params["w1"])) <= np.sqrt(6.0 / 20)
    again = mlp_init(spec, seed=0)
    np.testing.assert_array_equal(params["w0"], again["w0"])
    other = mlp_init(spec, seed=1)
    assert np.any(params["w0"] != other["w0"])


def test_mlp_forward_matches_manual_composition():
    spec = MlpSpec((2, 3, 1), activation="tanh", output_activation="tanh")
    params = mlp_init(spec, seed=3)
    x = np.array([0.4, -0.2])
    hidden = np.tanh(x @ params["w0"] + params["b0"])
    expected = np.tanh(hidden @ params["w1"] + params["b1"])
    np.testing.assert_allclose(mlp_forward(spec, params, x), expected, atol=1e-15)


def test_traced_forward_agrees_with_plain_forward():
    spec = MlpSpec((5, 12, 12, 4), activation="relu")
    params = mlp_init(spec, seed=9)
    x = np.random.default_rng(6).normal(size=(7, 5))
    plain = mlp_forward(spec, params, x)
    nodes = {k: ad.Node(v) for k, v in params.items()}
    traced = mlp_forward_nodes(spec, nodes, ad.constant(x))
    np.testing.assert_allclose(traced.value, plain, atol=0)


def test_mlp_spec_rejects_missing_hidden_layer():
    with pytest.raises(ConfigurationError):
        MlpSpec((4, 2))


def test_mlp_forward_rejects_wrong_input_width():
    spec = MlpSpec((4, 8, 2))
    params = mlp_init(spec, seed=1)
    with pytest.raises(ShapeError):
        mlp_forward(spec, params, np.zeros(3))


def test_adam_first_step_moves_by_lr_times_sign():
    params = ParamSet({"x": np.array([1.0, -2.0])})
    grads = ParamSet({"x": np.array([0.5, -3.0])})
    opt = OptState(lr=1e-2)
    new = adam_step(params, grads, opt)
    # With bias correction the first step is lr * g / (|g| + eps) ~= lr * sign(g).
    np.testing.assert_allclose(new["x"], [1.0 - 1e-2, -2.0 + 1e-2], atol=1e-6)
    assert opt.step == 1


def test_adam_descends_a_quadratic():
    params = ParamSet({"x": np.array([5.0, -4.0])})
    opt = OptState(lr=0.1)

    def loss_fn(nodes):
        return (nodes["x"] * nodes["x"]).sum()

    for _ in range(300):
        _, grads = value_and_grad(loss_fn, params)
        params = adam_step(params, grads, opt)
    assert np.max(np.abs(params["x"])) < 1e-2


def test_ema_update_contracts_toward_source():
    target = ParamSet({"w": np.array([1.0])})
    source = ParamSet({"w": np.array([0.0])})
    out = ema_update(target, source, momentum=0.99)
    assert float(out["w"][0]) == pytest.approx(0.99)
    out = ema_update(out, source, momentum=0.99)
    assert float(out["w"][0]) == pytest.approx(0.99**2)


def test_checkpoint_round_trip_is_file_level_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    params = ParamSet(
        {
            "enc.w0": rng.normal(size=(6, 4)),
            "enc.b0": rng.normal(size=4),
            "scalar": np.array(0.37),
        }
    )
    first = tmp_path / "ck1"
    second = tmp_path / "ck2"
    save_params(params, str(first))
    loaded = load_params(str(first))
    save_params(loaded, str(second))
    for fname in sorted(p.name for p in first.iterdir()):
        with open(first / fname, "rb") as fa, open(second / fname, "rb") as fb:
            assert fa.read() == fb.read(), fname
    assert loaded.names() == params.names()
    for name in params:
        assert np.max(np.abs(loaded[name] - params[name])) < 1e-6
        assert loaded[name].dtype == np.float64


def test_checkpoint_detects_truncated_file(tmp_path):
    params = ParamSet({"w": np.ones((3, 3))})
    save_params(params, str(tmp_path))
    with open(tmp_path / "w.bin", "wb") as fh:
        fh.write(b"\x00" * 8)
    with pytest.raises(ShapeError):
        load_params(str(tmp_path))


def test_load_params_requires_manifest(tmp_path):
    with pytest.raises(ConfigurationError):
        load_params(str(tmp_path))


def test_paramset_prefix_merge_round_trip():
    inner = ParamSet({"w0": np.ones(2), "b0": np.zeros(2)})
    outer = ParamSet()
    outer.merge("enc", inner)
    assert outer.names() == ["enc.w0", "enc.b0"]
    back = outer.prefixed("enc")
    assert back.names() == ["w0", "b0"]
    np.testing.assert_array_equal(back["w0"], inner["w0"])
    assert outer.total_count() == 4
