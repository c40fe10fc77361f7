import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sessrec import autodiff as ad
from sessrec.autodiff import Tensor


def grads_of(loss, leaves):
    return ad.backward(loss, leaves)


def test_sigmoid_at_zero():
    assert ad.sigmoid(Tensor([[0.0]])).data[0, 0] == pytest.approx(0.5)


def test_softmax_uniform():
    out = ad.softmax_last(Tensor([[1.0, 1.0, 1.0]]))
    np.testing.assert_allclose(out.data, [[1 / 3] * 3], atol=1e-12)


def test_l2_normalize_345():
    out = ad.l2_normalize_rows(Tensor([[3.0, 4.0]]))
    np.testing.assert_allclose(out.data, [[0.6, 0.8]], atol=1e-12)


def test_l2_normalize_zero_row_is_error():
    with pytest.raises(ValueError):
        ad.l2_normalize_rows(Tensor([[0.0, 0.0]]))


def test_l2_normalize_masked_zero_row_passes_through():
    out = ad.l2_normalize_rows(Tensor([[3.0, 4.0], [0.0, 0.0]]),
                               live_mask=np.array([1.0, 0.0]))
    np.testing.assert_allclose(out.data, [[0.6, 0.8], [0.0, 0.0]], atol=1e-12)


def test_backward_sum_is_ones():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    grads = grads_of(ad.tsum(x), {"x": x})
    np.testing.assert_allclose(grads["x"], [1.0, 1.0])


def test_backward_dot_bilinear():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    loss = ad.tsum(ad.mul(x, y))
    grads = grads_of(loss, {"x": x, "y": y})
    np.testing.assert_allclose(grads["x"], [3.0, 4.0])
    np.testing.assert_allclose(grads["y"], [1.0, 2.0])


def test_normalize_gradient_orthogonal_to_input():
    # loss = ||normalize(v) - t||^2: the radial direction is killed
    v_val = np.array([[3.0, 4.0]])
    t = np.array([[0.0, 1.0]])

    def loss_fn(leaves):
        diff = ad.l2_normalize_rows(leaves["v"]) - Tensor(t)
        return ad.tsum(ad.mul(diff, diff))

    v = Tensor(v_val, requires_grad=True)
    grads = grads_of(loss_fn({"v": v}), {"v": v})
    assert abs(np.dot(grads["v"][0], v_val[0])) < 1e-10
    assert ad.finite_diff_check(loss_fn, {"v": v_val.copy()}, eps=1e-6) < 1e-4


def test_unreachable_leaf_gets_zero_gradient():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    unused = Tensor(np.array([5.0]), requires_grad=True)
    grads = grads_of(ad.tsum(x), {"x": x, "unused": unused})
    np.testing.assert_allclose(grads["unused"], [0.0])


def test_non_scalar_loss_rejected():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(x, {"x": x})


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_dropout_eval_mode_is_identity():
    x = Tensor(np.ones((3, 4)))
    rng = np.random.default_rng(0)
    out = ad.dropout(x, 0.5, rng, train=False)
    assert out is x


def test_dropout_train_mode_scales_kept_entries():
    rng = np.random.default_rng(0)
    x = Tensor(np.ones((200, 50)))
    out = ad.dropout(x, 0.2, rng, train=True)
    kept = out.data[out.data != 0]
    np.testing.assert_allclose(kept, 1.0 / 0.8)
    assert abs((out.data != 0).mean() - 0.8) < 0.02


def test_constant_loss_grad_check():
    def loss_fn(leaves):
        return ad.tsum(ad.mul_scalar(leaves["x"], 0.0))

    err = ad.finite_diff_check(loss_fn, {"x": np.array([[1.0, 2.0]])})
    assert err < 1e-4


def test_composition_grad_check():
    rng = np.random.default_rng(42)
    vals = {
        "a": rng.normal(size=(3, 4)) * 0.3,
        "w": rng.normal(size=(4, 4)) * 0.3,
        "b": rng.normal(size=(4,)) * 0.3,
    }

    def loss_fn(leaves):
        h = ad.tanh(ad.matmul(leaves["a"], leaves["w"]) + leaves["b"])
        g = ad.sigmoid(ad.mul(h, h))
        p = ad.softmax_last(ad.concat_last(g, ad.exp(ad.mul_scalar(h, 0.1))))
        return ad.tsum(ad.mul(p, ad.log(p + 1.0)))

    assert ad.finite_diff_check(loss_fn, vals) < 1e-4


def test_gather_scatter_add_grad_check():
    rng = np.random.default_rng(7)
    vals = {"table": rng.normal(size=(5, 3))}
    idx = np.array([[0, 2, 2], [4, 0, 1]])

    def loss_fn(leaves):
        g = ad.gather(leaves["table"], idx)
        return ad.tsum(ad.mul(g, g))

    assert ad.finite_diff_check(loss_fn, vals) < 1e-4


def test_masked_softmax_rows_sum_to_one_over_valid():
    mask = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    out = ad.softmax_last(Tensor(np.array([[1.0, 2.0, 100.0], [3.0, 100.0, 100.0]])), mask=mask)
    np.testing.assert_allclose(out.data.sum(axis=1), [1.0, 1.0], atol=1e-9)
    assert out.data[0, 2] == 0.0 and out.data[1, 1] == 0.0


def test_backward_deterministic():
    rng = np.random.default_rng(3)
    x_val = rng.normal(size=(4, 4))

    def once():
        x = Tensor(x_val.copy(), requires_grad=True)
        loss = ad.tsum(ad.sigmoid(ad.matmul(x, x)))
        return ad.backward(loss, {"x": x})["x"]

    np.testing.assert_array_equal(once(), once())


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=2, max_size=6))
@settings(max_examples=50, deadline=None)
def test_softmax_rows_sum_to_one(row):
    out = ad.softmax_last(Tensor(np.array([row])))
    assert abs(out.data.sum() - 1.0) < 1e-9


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=2, max_size=6))
@settings(max_examples=50, deadline=None)
def test_normalize_unit_norm(row):
    vec = np.array([row])
    if np.linalg.norm(vec) < 1e-6:
        return
    out = ad.l2_normalize_rows(Tensor(vec))
    assert abs(np.linalg.norm(out.data) - 1.0) < 1e-9
