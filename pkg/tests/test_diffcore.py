"""
test_diffcore.py - Forward values and gradient contracts of the tape engine
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from diffcore import (
    ContractError,
    DimensionError,
    Graph,
    LabelIndexError,
    ParameterError,
    Tensor,
    gradient_check,
    relative_error,
)

SEEDS = range(20)


def _assert_gradients(build, inputs, tol=1e-4):
    for name, (analytic, numeric) in gradient_check(build, inputs).items():
        err = relative_error(analytic, numeric).max()
        assert err < tol, f"{name}: relative error {err}"


def _away_from_kinks(x, margin=1e-3):
    return np.where(np.abs(x) < margin, 0.5, x)


def _readout_weights(weights):
    """Scalar readout sum(out * W) for non-scalar ops."""

    def readout(graph, node):
        return graph.sum(graph.mul(node, graph.constant(weights)))

    return readout


# ----------------------------------------------------------------------
# Tensor
# ----------------------------------------------------------------------
def test_tensor_shapes():
    assert Tensor(3.0).shape == (1, 1)
    assert Tensor([1.0, 2.0, 3.0]).shape == (1, 3)
    assert Tensor(np.zeros((4, 2))).shape == (4, 2)
    with pytest.raises(DimensionError):
        Tensor(np.zeros((2, 2, 2)))


def test_tensor_item_requires_scalar():
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(ContractError):
        Tensor([1.0, 2.0]).item()


# ----------------------------------------------------------------------
# matmul
# ----------------------------------------------------------------------
def test_matmul_identity(rng):
    g = Graph()
    m = rng.normal(size=(2, 2))
    out = g.matmul(g.constant(np.eye(2)), g.constant(m))
    assert_array_equal(out.value, m)


def test_matmul_hand_arithmetic():
    g = Graph()
    out = g.matmul(g.constant([[1, 2], [3, 4]]), g.constant([[1], [1]]))
    assert_array_equal(out.value, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    g = Graph()
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        g.matmul(g.constant(np.zeros((2, 3))), g.constant(np.zeros((2, 3))))


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_gradient(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(3, 2))
    readout = _readout_weights(w)
    _assert_gradients(
        lambda g, n: readout(g, g.matmul(n["a"], n["b"])),
        {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))},
    )


# ----------------------------------------------------------------------
# Elementwise and structural ops
# ----------------------------------------------------------------------
def test_relu_values():
    g = Graph()
    out = g.relu(g.constant([[-1.0, 2.0, 0.0]]))
    assert_array_equal(out.value, [[0.0, 2.0, 0.0]])


def test_relu_derivative_at_zero_is_zero():
    g = Graph()
    x = g.param([[0.0, 1.0]])
    grads = g.backward(g.sum(g.relu(x)))
    assert_array_equal(grads[x.id].data, [[0.0, 1.0]])


def test_concat_cols_shape(rng):
    g = Graph()
    out = g.concat_cols(g.constant(rng.normal(size=(5, 3))), g.constant(np.ones((5, 1))))
    assert out.shape == (5, 4)
    with pytest.raises(DimensionError):
        g.concat_cols(g.constant(np.ones((5, 3))), g.constant(np.ones((4, 1))))


def test_add_only_broadcasts_bias_rows():
    g = Graph()
    a = g.constant(np.ones((4, 3)))
    assert g.add(a, g.constant(np.ones((1, 3)))).shape == (4, 3)
    with pytest.raises(DimensionError):
        g.add(a, g.constant(np.ones((4, 1))))
    with pytest.raises(DimensionError):
        g.mul(a, g.constant(np.ones((1, 3))))


UNARY_OPS = {
    "relu": lambda g, x: g.relu(x),
    "tanh": lambda g, x: g.tanh(x),
    "sigmoid": lambda g, x: g.sigmoid(x),
    "scale": lambda g, x: g.scale(x, -1.7),
    "transpose": lambda g, x: g.transpose(x),
    "normalize_rows": lambda g, x: g.normalize_rows(x),
}


@pytest.mark.parametrize("op", sorted(UNARY_OPS))
@pytest.mark.parametrize("seed", SEEDS)
def test_unary_gradients(op, seed):
    rng = np.random.default_rng(seed)
    x = _away_from_kinks(rng.normal(size=(4, 3)))
    out_shape = (3, 4) if op == "transpose" else (4, 3)
    readout = _readout_weights(rng.normal(size=out_shape))
    fn = UNARY_OPS[op]
    _assert_gradients(lambda g, n: readout(g, fn(g, n["x"])), {"x": x})


@pytest.mark.parametrize("seed", SEEDS)
def test_binary_gradients(seed):
    rng = np.random.default_rng(seed)
    w_add = rng.normal(size=(4, 3))
    w_rows = rng.normal(size=(6, 3))
    w_cols = rng.normal(size=(4, 5))

    def build(g, n):
        full = g.sum(g.mul(g.add(n["a"], n["b"]), g.constant(w_add)))
        bias = g.sum(g.mul(g.add(n["a"], n["bias"]), g.constant(w_add)))
        prod = g.sum(g.mul(n["a"], n["b"]))
        rows = g.sum(g.mul(g.concat_rows(n["a"], n["c"]), g.constant(w_rows)))
        cols = g.sum(g.mul(g.concat_cols(n["a"], n["d"]), g.constant(w_cols)))
        return g.add(g.add(g.add(full, bias), g.add(prod, rows)), cols)

    _assert_gradients(
        build,
        {
            "a": rng.normal(size=(4, 3)),
            "b": rng.normal(size=(4, 3)),
            "bias": rng.normal(size=(1, 3)),
            "c": rng.normal(size=(2, 3)),
            "d": rng.normal(size=(4, 2)),
        },
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_reduction_gradients(seed):
    rng = np.random.default_rng(seed)
    _assert_gradients(
        lambda g, n: g.add(g.mean(g.tanh(n["x"])), g.scale(g.sum(n["x"]), 0.25)),
        {"x": rng.normal(size=(5, 2))},
    )


def test_normalize_rows_zero_row_is_finite():
    g = Graph()
    x = g.param(np.array([[0.0, 0.0], [3.0, 4.0]]))
    out = g.normalize_rows(x)
    assert_allclose(out.value[1], [0.6, 0.8])
    assert_array_equal(out.value[0], [0.0, 0.0])
    grads = g.backward(g.sum(out))
    assert np.all(np.isfinite(grads[x.id].data))


# ----------------------------------------------------------------------
# Losses
# ----------------------------------------------------------------------
def test_softmax_cross_entropy_uniform():
    g = Graph()
    loss = g.softmax_cross_entropy(g.constant(np.zeros((4, 2))), [0, 1, 1, 0])
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-15)


def test_softmax_cross_entropy_saturated_margin():
    g = Graph()
    loss = g.softmax_cross_entropy(g.constant([[60.0, -60.0], [-60.0, 60.0]]), [0, 1])
    assert loss.item() < 1e-40


def test_softmax_cross_entropy_label_range():
    g = Graph()
    logits = g.constant(np.zeros((2, 3)))
    with pytest.raises(LabelIndexError):
        g.softmax_cross_entropy(logits, [0, 3])
    with pytest.raises(LabelIndexError):
        g.softmax_cross_entropy(logits, [-1, 0])
    with pytest.raises(DimensionError):
        g.softmax_cross_entropy(logits, [0])


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_cross_entropy_gradient(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=5)
    _assert_gradients(lambda g, n: g.softmax_cross_entropy(n["z"], labels), {"z": rng.normal(size=(5, 3))})


@pytest.mark.parametrize("seed", SEEDS)
def test_sigmoid_cross_entropy_gradient(seed):
    rng = np.random.default_rng(seed)
    targets = rng.integers(0, 2, size=6).astype(float)
    _assert_gradients(lambda g, n: g.sigmoid_cross_entropy(n["z"], targets), {"z": 2.0 * rng.normal(size=(6, 1))})


def test_l1_loss_values():
    g = Graph()
    assert g.l1_loss(g.constant([[1.0], [3.0]]), g.constant([[0.0], [1.0]])).item() == 1.5
    same = g.constant([[0.2], [-4.0]])
    assert g.l1_loss(same, same).item() == 0.0
    with pytest.raises(DimensionError):
        g.l1_loss(g.constant(np.zeros((2, 1))), g.constant(np.zeros((3, 1))))


def test_l1_subgradient_at_tie_is_zero():
    g = Graph()
    pred = g.param([[1.0], [2.0]])
    grads = g.backward(g.l1_loss(pred, g.constant([[1.0], [0.0]])))
    assert_array_equal(grads[pred.id].data, [[0.0], [0.5]])


@pytest.mark.parametrize("seed", SEEDS)
def test_l1_gradient_away_from_ties(seed):
    rng = np.random.default_rng(seed)
    target = rng.normal(size=(6, 1))
    pred = target + _away_from_kinks(rng.normal(size=(6, 1)))
    _assert_gradients(lambda g, n: g.l1_loss(n["p"], g.constant(target)), {"p": pred})


@pytest.mark.parametrize("seed", SEEDS)
def test_scale_grad_surrogates_gradient(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=5)
    target = rng.normal(size=(5, 1))
    pred = target + _away_from_kinks(rng.normal(size=(5, 1)))
    _assert_gradients(lambda g, n: g.ce_scale_grad(n["z"], labels), {"z": rng.normal(size=(5, 2))})
    _assert_gradients(lambda g, n: g.l1_scale_grad(n["p"], g.constant(target)), {"p": pred})


def test_ce_scale_grad_matches_finite_difference_in_scale(rng):
    logits = rng.normal(size=(7, 2))
    labels = rng.integers(0, 2, size=7)

    def ce_at(s):
        graph = Graph()
        return graph.softmax_cross_entropy(graph.constant(logits * s), labels).item()

    g = Graph()
    value = g.ce_scale_grad(g.constant(logits), labels).item()
    assert value == pytest.approx((ce_at(1 + 1e-6) - ce_at(1 - 1e-6)) / 2e-6, rel=1e-6)


# ----------------------------------------------------------------------
# Gradient reversal
# ----------------------------------------------------------------------
def test_grad_reverse_forward_identity(rng):
    g = Graph()
    x = g.constant(rng.normal(size=(3, 4)))
    assert_array_equal(g.grad_reverse(x, 2.0).value, x.value)


def test_grad_reverse_sum():
    g = Graph()
    x = g.param(np.ones((2, 3)))
    grads = g.backward(g.sum(g.grad_reverse(x, 1.0)))
    assert_array_equal(grads[x.id].data, -np.ones((2, 3)))


def test_grad_reverse_rejects_negative():
    g = Graph()
    with pytest.raises(ParameterError):
        g.grad_reverse(g.constant([[1.0]]), -0.1)


@given(lam=st.floats(0.0, 10.0, allow_nan=False), seed=st.integers(0, 2**31 - 1))
def test_grad_reverse_is_exact_negated_scaling(lam, seed):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 2))
    labels = rng.integers(0, 2, size=4)

    def run(reverse):
        g = Graph()
        x = g.param(x0)
        h = g.grad_reverse(x, lam) if reverse else x
        loss = g.softmax_cross_entropy(g.matmul(g.tanh(h), g.constant(w)), labels)
        return g.backward(loss)[x.id].data

    assert_array_equal(run(True), -lam * run(False))


# ----------------------------------------------------------------------
# Backward contract
# ----------------------------------------------------------------------
def test_backward_sum_is_ones():
    g = Graph()
    x = g.param(np.zeros((3, 2)))
    assert_array_equal(g.backward(g.sum(x))[x.id].data, np.ones((3, 2)))


def test_backward_disconnected_param_gets_zeros():
    g = Graph()
    x = g.param(np.ones((2, 2)))
    orphan = g.param(np.ones((3, 1)))
    grads = g.backward(g.mean(x))
    assert_array_equal(grads[orphan.id].data, np.zeros((3, 1)))


def test_backward_requires_scalar():
    g = Graph()
    x = g.param(np.ones((2, 2)))
    with pytest.raises(ContractError):
        g.backward(g.relu(x))


def test_backward_rejects_foreign_nodes():
    a, b = Graph(), Graph()
    x = a.param(np.ones((1, 1)))
    with pytest.raises(ContractError):
        b.relu(x)
    with pytest.raises(ContractError):
        b.backward(x)


def test_backward_is_deterministic(rng):
    x0 = rng.normal(size=(6, 4))
    w0 = rng.normal(size=(4, 3))
    labels = rng.integers(0, 3, size=6)

    def run():
        g = Graph()
        x, w = g.param(x0), g.param(w0)
        h = g.relu(g.matmul(x, w))
        loss = g.add(g.softmax_cross_entropy(h, labels), g.mean(g.mul(h, h)))
        grads = g.backward(loss)
        return grads[x.id].data, grads[w.id].data

    for first, second in zip(run(), run()):
        assert_array_equal(first, second)
