"""Gradient checks for every primitive against central finite differences."""

import numpy as np
import pytest

from poseidon import diff
from poseidon.diff import Tensor, grad_check
from poseidon.errors import InvalidInputError

RNG = np.random.default_rng(1234)


def rand(*shape, lo=-1.0, hi=1.0):
    return Tensor(RNG.uniform(lo, hi, size=shape))


def test_sigmoid_at_zero():
    x = Tensor(0.0, requires_grad=True)
    y = diff.sigmoid(x)
    assert y.item() == pytest.approx(0.5)
    y.backward()
    assert x.grad == pytest.approx(0.25)


def test_softplus_at_zero():
    x = Tensor(0.0, requires_grad=True)
    y = diff.softplus(x)
    assert y.item() == pytest.approx(np.log(2.0), abs=1e-12)
    y.backward()
    assert x.grad == pytest.approx(0.5)


def test_square_gradient_analytic():
    err = grad_check(lambda t: diff.power(t, 2.0), Tensor(np.array(3.0)))
    assert err < 1e-10


def test_conv2d_identity_kernel():
    x = rand(2, 5, 7, 3)
    w = np.zeros((1, 1, 3, 3))
    w[0, 0] = np.eye(3)
    y = diff.conv2d(x, Tensor(w))
    np.testing.assert_allclose(y.data, x.data)


def test_conv2d_sum_gradient_is_ones():
    x = Tensor(RNG.uniform(-1, 1, size=(2, 4, 4, 1)), requires_grad=True)
    w = Tensor(np.ones((1, 1, 1, 1)))
    diff.tsum(diff.conv2d(x, w)).backward()
    np.testing.assert_allclose(x.grad, np.ones_like(x.data))


def _primitive_cases():
    """Each case pre-binds its random constants so f stays pure."""
    c43, c3, c32, c4, c23a = rand(4, 3), rand(3), rand(3, 2), rand(4), rand(2, 3)
    c413, c23b, c62, c22, c46 = rand(4, 1, 3), rand(2, 3), rand(6, 2), rand(2, 2), rand(4, 6)
    kern, c2564 = rand(3, 3, 2, 4), rand(2, 5, 6, 4)
    return [
        ("add", lambda t: diff.tsum(t + c43), (4, 3)),
        ("add_broadcast", lambda t: diff.tsum(c43 + t), (3,)),
        ("sub", lambda t: diff.tsum(c43 - t), (4, 3)),
        ("mul", lambda t: diff.tsum(t * c43), (4, 3)),
        ("mul_broadcast", lambda t: diff.tsum(c413 * t), (2, 3)),
        ("div", lambda t: diff.tsum(c43 / (t + 3.0)), (4, 3)),
        ("pow", lambda t: diff.tsum(diff.power(t + 2.0, 1.7)), (5,)),
        ("matmul", lambda t: diff.tsum(t @ c32), (4, 3)),
        ("relu", lambda t: diff.tsum(diff.relu(t)), (4, 3)),
        ("sigmoid", lambda t: diff.tsum(diff.sigmoid(t * 3.0)), (4, 3)),
        ("tanh", lambda t: diff.tsum(diff.tanh(t * 2.0)), (4, 3)),
        ("softplus", lambda t: diff.tsum(diff.softplus(t * 2.0)), (4, 3)),
        ("exp", lambda t: diff.tsum(diff.exp(t)), (4, 3)),
        ("log", lambda t: diff.tsum(diff.log(t + 2.0)), (4, 3)),
        ("expm1x", lambda t: diff.tsum(diff.expm1x(t)), (4, 3)),
        ("sum_axis", lambda t: diff.tsum(diff.tsum(t, axis=1) * c4), (4, 3)),
        ("mean", lambda t: diff.mean(t), (4, 3)),
        ("mean_axes", lambda t: diff.tsum(diff.mean(t, axis=(1, 2)) * c23a), (2, 4, 5, 3)),
        ("gap", lambda t: diff.tsum(diff.global_avg_pool(t) * c23b), (2, 4, 5, 3)),
        ("reshape", lambda t: diff.tsum(diff.reshape(t, (6, 2)) * c62), (4, 3)),
        ("broadcast_to", lambda t: diff.tsum(diff.broadcast_to(t, (4, 3)) * c43), (1, 3)),
        ("slice", lambda t: diff.tsum(t[1:3, ::2] * c22), (4, 3)),
        ("concat", lambda t: diff.tsum(diff.concat([t, t * 2.0], axis=1) * c46), (4, 3)),
        ("conv2d_x", lambda t: diff.tsum(diff.conv2d(t, kern) * c2564), (2, 5, 6, 2)),
        ("max_axis", lambda t: diff.tsum(diff.tmax(t, axis=1) * c4), (4, 3)),
        ("max_all", lambda t: diff.tmax(t), (4, 3)),
    ]


@pytest.mark.parametrize("name,f,shape", _primitive_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_primitive_gradients(name, f, shape):
    x = Tensor(RNG.uniform(0.1, 1.0, size=shape) if name in ("log",) else RNG.uniform(-1, 1, size=shape))
    if name in ("relu", "max_axis", "max_all"):
        # keep the probe away from kinks and exact ties
        x = Tensor(np.round(RNG.uniform(-1, 1, size=shape), 2) + 0.003)
    assert grad_check(f, x) < 1e-6


def test_conv2d_weight_gradient():
    x = rand(2, 5, 6, 2)
    target = rand(2, 5, 6, 3)
    assert grad_check(lambda w: diff.tsum(diff.conv2d(x, w) * target), rand(3, 3, 2, 3)) < 1e-6


def test_expm1x_smooth_through_zero():
    x = Tensor(np.array([-1e-6, 0.0, 1e-6, 0.5, -0.5]))
    y = diff.expm1x(x)
    expected = np.array([np.expm1(v) / v if v != 0 else 1.0 for v in x.data])
    np.testing.assert_allclose(y.data, expected, rtol=1e-10)
    # gradient exists and is finite right at the removable singularity
    assert grad_check(lambda t: diff.tsum(diff.expm1x(t)), x) < 1e-6


def test_backward_linearity():
    xv = RNG.uniform(-1, 1, size=(5,))

    def grad_of(fn):
        t = Tensor(xv, requires_grad=True)
        fn(t).backward()
        return t.grad.copy()

    f = lambda t: diff.tsum(diff.sigmoid(t) * 2.0)
    g = lambda t: diff.mean(diff.power(t, 2.0))
    combined = grad_of(lambda t: f(t) + g(t))
    np.testing.assert_allclose(combined, grad_of(f) + grad_of(g), rtol=1e-12)


def test_off_tape_parameter_gets_no_gradient():
    used = Tensor(RNG.uniform(-1, 1, size=(3,)), requires_grad=True)
    unused = Tensor(RNG.uniform(-1, 1, size=(3,)), requires_grad=True)
    diff.tsum(used * 2.0).backward()
    assert unused.grad is None
    np.testing.assert_allclose(used.grad, 2.0 * np.ones(3))


def test_max_tie_break_routes_to_first():
    x = Tensor(np.array([1.0, 3.0, 3.0, 2.0]), requires_grad=True)
    diff.tmax(x).backward()
    np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0, 0.0])


def test_shared_subexpression_accumulates():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = x * x + x  # dy/dx = 2x + 1 = 5
    y.backward()
    assert x.grad == pytest.approx(5.0)


def test_second_backward_rejected():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = x * x
    y.backward()
    with pytest.raises(InvalidInputError):
        y.backward()


def test_matmul_shape_error_names_shapes():
    with pytest.raises(InvalidInputError, match="matmul"):
        diff.matmul(rand(2, 3), rand(4, 5))


def test_conv2d_even_kernel_rejected():
    with pytest.raises(InvalidInputError, match="odd"):
        diff.conv2d(rand(1, 4, 4, 1), rand(2, 2, 1, 1))


def test_grad_check_requires_scalar():
    with pytest.raises(InvalidInputError):
        grad_check(lambda t: t * 2.0, rand(3))
