import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbd import autodiff as ad


def num_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_square_value_and_gradient():
    root, leaves = ad.record(lambda x: ad.square(x), 3.0)
    assert root.item() == 9.0
    assert ad.backward(root)[leaves[0]] == pytest.approx(6.0)


def test_softplus_at_zero():
    root, leaves = ad.record(ad.softplus, 0.0)
    grads = ad.backward(root)
    assert root.item() == pytest.approx(np.log(2.0))
    assert grads[leaves[0]] == pytest.approx(0.5)


def test_dot_gradient():
    root, leaves = ad.record(lambda x: ad.dot(x, np.array([3.0, 4.0])), np.array([1.0, 2.0]))
    assert root.item() == 11.0
    np.testing.assert_allclose(ad.backward(root)[leaves[0]], [3.0, 4.0])


def test_jvp_of_squared_norm():
    out = ad.directional_derivative(lambda x: ad.sum(ad.square(x)), np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert out.item() == pytest.approx(2.0)


def test_directional_derivative_shape_mismatch():
    with pytest.raises(ValueError):
        ad.directional_derivative(ad.sum, np.zeros(3), np.zeros(2))


def test_unsupported_numpy_ufunc_is_rejected():
    t = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ad.UnsupportedPrimitive):
        np.sin(t)
    with pytest.raises(ad.UnsupportedPrimitive):
        t ** 3


def test_backward_needs_scalar_root():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(ad.mul(x, 2.0))


def test_shared_subexpression_accumulates():
    # f(x) = (x*x) + (x*x) reuses a node twice
    def f(x):
        y = ad.mul(x, x)
        return ad.sum(ad.add(y, y))

    x0 = np.array([0.5, -1.5])
    root, leaves = ad.record(f, x0)
    np.testing.assert_allclose(ad.backward(root)[leaves[0]], 4 * x0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=6))
def test_composite_gradient_matches_finite_differences(vals):
    x0 = np.array(vals)
    w = np.linspace(-1.0, 1.0, len(vals))

    def f_np(x):
        return np.sum(np.logaddexp(0, x) * w) + np.log(1 + np.sum(x * x)) + np.sum(np.exp(-x) / (2 + x * x))

    def f_ad(x):
        a = ad.sum(ad.mul(ad.softplus(x), w))
        b = ad.log(ad.add(1.0, ad.sum(ad.square(x))))
        c = ad.sum(ad.div(ad.exp(ad.neg(x)), ad.add(2.0, ad.square(x))))
        return ad.add(ad.add(a, b), c)

    root, leaves = ad.record(f_ad, x0)
    assert root.item() == pytest.approx(f_np(x0), rel=1e-12)
    np.testing.assert_allclose(ad.backward(root)[leaves[0]], num_grad(f_np, x0), rtol=1e-6, atol=1e-8)


def test_matmul_affine_broadcast_gradients():
    rng = np.random.default_rng(0)
    x0, w0, b0 = rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), rng.standard_normal(5)

    def f(w):
        return np.sum(np.logaddexp(0, x0 @ w.T + b0))

    root, leaves = ad.record(lambda w: ad.sum(ad.softplus(ad.affine(x0, w, b0))), w0)
    np.testing.assert_allclose(ad.backward(root)[leaves[0]], num_grad(f, w0), rtol=1e-6)


def test_nested_jvp_parameter_gradient():
    # d/dw <grad_x f(x; w), v> for f = sum(softplus(w * x)): equals sum(sigmoid'(w x) * w x v + sigmoid(w x) v)
    x0, v0 = np.array([0.3, -1.2]), np.array([1.0, 2.0])
    tape = ad.Tape()
    w = tape.param("w", np.array([0.7, 1.1]))
    out = ad.directional_derivative(lambda x: ad.sum(ad.softplus(ad.mul(w, x))), x0, v0)
    g = tape.gradients(ad.sum(out))["w"]

    def jvp(wv):
        s = 0.5 * (1 + np.tanh(0.5 * wv * x0))
        return np.sum(s * wv * v0)

    np.testing.assert_allclose(g, num_grad(jvp, np.array([0.7, 1.1])), rtol=1e-7)


def test_unreached_parameter_gets_zero_gradient():
    tape = ad.Tape()
    a = tape.param("a", np.ones(2))
    tape.param("b", np.ones(3))
    grads = tape.gradients(ad.sum(ad.square(a)))
    np.testing.assert_array_equal(grads["b"], np.zeros(3))


def test_duplicate_parameter_name():
    tape = ad.Tape()
    tape.param("a", np.ones(1))
    with pytest.raises(KeyError):
        tape.param("a", np.ones(1))


def test_take_reshape_concat_maximum():
    x0 = np.array([1.0, -2.0, 3.0, 0.5])

    def f(x):
        parts = ad.concat([ad.take(x, np.array([0, 2])), ad.reshape(x, (2, 2))[1]], axis=0)
        return ad.sum(ad.maximum(parts, 0.7))

    root, leaves = ad.record(f, x0)
    # picks x0, x2 then row 1 = (x2, x3); entries above 0.7 pass gradient
    np.testing.assert_allclose(ad.backward(root)[leaves[0]], [1.0, 0.0, 2.0, 0.0])


def test_sqrt_mean_gradients():
    x0 = np.array([1.0, 4.0, 9.0])
    root, leaves = ad.record(lambda x: ad.mean(ad.sqrt(x)), x0)
    np.testing.assert_allclose(ad.backward(root)[leaves[0]], 1 / (6 * np.sqrt(x0)))
