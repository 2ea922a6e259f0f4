"""The reverse-mode tape: values, gradients, broadcasting, detachment."""

import numpy as np
import pytest

from advfas.autodiff import Tensor, astensor, clip, log, relu, sigmoid, tanh
from advfas.errors import ShapeError


def numeric_grad(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x, dtype=np.float64)
    for i in range(x.size):
        hi = x.copy().reshape(-1)
        hi[i] += step
        lo = x.copy().reshape(-1)
        lo[i] -= step
        grad.reshape(-1)[i] = (fn(hi.reshape(x.shape)) - fn(lo.reshape(x.shape))) / (2.0 * step)
    return grad


def test_add_mul_matmul_values():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal((a + b).data, [[6.0, 8.0], [10.0, 12.0]])
    assert np.array_equal((a * b).data, [[5.0, 12.0], [21.0, 32.0]])
    assert np.array_equal((a @ b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_backward_matches_numeric_gradient_on_composite():
    rng = np.random.default_rng(7)
    w = rng.normal(size=(3, 2))
    x = rng.normal(size=(4, 3))

    def value(wv):
        h = np.tanh(x @ wv)
        s = 1.0 / (1.0 + np.exp(-h))
        return float(np.mean(np.log(np.clip(s, 1e-7, 1 - 1e-7))))

    wt = Tensor(w, requires_grad=True)
    loss = log(clip(tanh(Tensor(x) @ wt).sigmoid(), 1e-7, 1 - 1e-7)).mean()
    loss.backward()
    assert np.allclose(wt.grad, numeric_grad(value, w), rtol=1e-6, atol=1e-8)


def test_broadcast_add_unbroadcasts_gradient():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    (a + b).sum().backward()
    assert np.array_equal(a.grad, np.ones((2, 3)))
    assert np.array_equal(b.grad, np.full(3, 2.0))  # summed over the broadcast axis


def test_scalar_broadcast_and_reflected_ops():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    out = 3.0 * a + 1.0 - a * 0.5
    out.sum().backward()
    assert np.allclose(out.data, [3.5, 6.0])
    assert np.allclose(a.grad, [2.5, 2.5])


def test_sub_and_neg():
    a = Tensor(np.array([2.0, 5.0]), requires_grad=True)
    (1.0 - a).sum().backward()
    assert np.array_equal(a.grad, [-1.0, -1.0])


def test_backward_requires_scalar_root():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (a * 2.0).backward()


def test_matmul_rejects_non_2d():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)) @ Tensor(np.ones((3, 2)))


def test_detach_blocks_gradient_exactly():
    a = Tensor(np.array([0.3, 0.7]), requires_grad=True)
    live = (a * a).sum()
    frozen = (a.detach() * a).sum()
    live.backward()
    live_grad = a.grad.copy()
    a.zero_grad()
    frozen.backward()
    # d/da (const * a) = const: exactly half the live gradient 2a
    assert np.array_equal(a.grad, live_grad / 2.0)
    a.zero_grad()
    (a.detach() * a.detach()).sum().backward()
    assert a.grad is None


def test_clip_gradient_mask():
    a = Tensor(np.array([-0.5, 0.2, 0.8, 1.7]), requires_grad=True)
    clip(a, 0.0, 1.0).sum().backward()
    assert np.array_equal(a.grad, [0.0, 1.0, 1.0, 0.0])


def test_relu_gradient_and_boundary():
    a = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    relu(a).sum().backward()
    assert np.array_equal(a.grad, [0.0, 0.0, 1.0])  # flat side owns the kink


def test_sigmoid_stable_in_both_tails():
    big = sigmoid(np.array([800.0, -800.0]))
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(1.0)
    assert big[1] == pytest.approx(0.0)
    t = Tensor(np.array([800.0, -800.0]), requires_grad=True)
    sigmoid(t).sum().backward()
    assert np.all(np.isfinite(t.grad))


def test_mean_sum_reshape_gradients():
    a = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True)
    a.mean().backward()
    assert np.allclose(a.grad, np.full((2, 3), 1.0 / 6.0))
    a.zero_grad()
    a.reshape(6).sum().backward()
    assert np.array_equal(a.grad, np.ones((2, 3)))


def test_grad_accumulates_across_shared_subexpression():
    a = Tensor(np.array([2.0]), requires_grad=True)
    b = a * 3.0
    (b + b).sum().backward()
    assert np.array_equal(a.grad, [6.0])


def test_astensor_passthrough_and_wrap():
    t = Tensor([1.0])
    assert astensor(t) is t
    assert isinstance(astensor([1.0, 2.0]), Tensor)


def test_graph_leaf_ids_sees_through_the_graph():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=False)
    out = (a * b).sum()
    leaves = out.graph_leaf_ids()
    assert id(a) in leaves
    assert id(b) not in leaves


def test_integer_input_promotes_to_float():
    t = Tensor(np.array([1, 2, 3]))
    assert t.data.dtype.kind == "f"
