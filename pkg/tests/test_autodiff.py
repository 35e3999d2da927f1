import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fovex import autodiff as ad
from fovex.autodiff import Tensor
from fovex.errors import ShapeError

from conftest import numeric_grad, rel_err


def test_add_values():
    np.testing.assert_array_equal(ad.add(Tensor([1, 2]), Tensor([3, 4])).data, [4, 6])


def test_mul_by_ones_is_identity_with_identity_jacobian():
    x = Tensor([1.5, -2.0, 3.0], requires_grad=True)
    out = ad.mul(x, Tensor(np.ones(3)))
    np.testing.assert_array_equal(out.data, x.data)
    out.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones(3))


def test_product_rule():
    a, b = Tensor([2.0], requires_grad=True), Tensor([5.0], requires_grad=True)
    ad.mul(a, b).sum().backward()
    assert a.grad.tolist() == [5.0]
    assert b.grad.tolist() == [2.0]


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
        ad.add(Tensor([1, 2]), Tensor([1, 2, 3]))


def test_scalar_broadcast_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    s = Tensor(2.0, requires_grad=True)
    ad.mul(x, s).sum().backward()
    np.testing.assert_array_equal(x.grad, [2, 2, 2])
    assert s.grad == pytest.approx(6.0)


def test_clamp_gradient_only_in_interior():
    x = Tensor([-1.0, 0.5, 2.0, 1.0], requires_grad=True)
    out = ad.clamp(x, 0.0, 1.0)
    np.testing.assert_array_equal(out.data, [0, 0.5, 1, 1])
    out.sum().backward()
    np.testing.assert_array_equal(x.grad, [0, 1, 0, 0])


def test_elementwise_dispatch():
    a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
    assert ad.elementwise("sub", a, b).data.tolist() == [-2, -3]
    assert ad.elementwise("scale", a, 3).data.tolist() == [3, 6]
    assert ad.elementwise("clamp", b, (0, 4)).data.tolist() == [3, 4]
    with pytest.raises(ValueError):
        ad.elementwise("pow", a, b)


def test_conv2d_constant_kernel():
    out = ad.conv2d(Tensor(np.ones((1, 3, 3))), Tensor([[[[2.0]]]]))
    np.testing.assert_array_equal(out.data, np.full((1, 3, 3), 2.0))


def test_conv2d_identity_kernel():
    x = np.random.default_rng(0).normal(size=(1, 5, 6))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1
    np.testing.assert_array_equal(ad.conv2d(Tensor(x), Tensor(k), padding=1).data, x)


def test_conv2d_matches_direct_loops():
    rng = np.random.default_rng(1)
    x, k = rng.normal(size=(2, 5, 6)), rng.normal(size=(3, 2, 3, 2))
    out = ad.conv2d(Tensor(x), Tensor(k), stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    for o in range(3):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                patch = xp[:, 2 * i:2 * i + 3, 2 * j:2 * j + 2]
                assert out[o, i, j] == pytest.approx(np.sum(patch * k[o]), abs=1e-12)


def test_conv2d_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
    k = Tensor(rng.normal(size=(1, 1, 3, 3)), requires_grad=True)
    w = rng.normal(size=(1, 4, 4))

    def loss():
        return float(np.sum(ad.conv2d(Tensor(x.data), Tensor(k.data), padding=1).data * w))

    ad.mul(ad.conv2d(x, k, padding=1), Tensor(w)).sum().backward()
    assert rel_err(x.grad, numeric_grad(loss, x.data)) < 1e-6
    assert rel_err(k.grad, numeric_grad(loss, k.data)) < 1e-6


def test_conv2d_bad_channels():
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))


def test_dense_identity_and_value():
    x = Tensor([1.0, -2.0])
    np.testing.assert_array_equal(ad.dense(x, Tensor(np.eye(2)), Tensor(np.zeros(2))).data, x.data)
    assert ad.dense(Tensor([1.0, 1.0]), Tensor([[1.0, 2.0]]), Tensor([3.0])).data.tolist() == [6.0]


def test_dense_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    x, w, b = (Tensor(rng.normal(size=s), requires_grad=True) for s in [(3,), (2, 3), (2,)])
    coef = rng.normal(size=2)

    def loss():
        return float(np.dot(ad.dense(Tensor(x.data), Tensor(w.data), Tensor(b.data)).data, coef))

    ad.mul(ad.dense(x, w, b), Tensor(coef)).sum().backward()
    for t in (x, w, b):
        assert rel_err(t.grad, numeric_grad(loss, t.data)) < 1e-6


def test_dense_dimension_mismatch():
    with pytest.raises(ShapeError):
        ad.dense(Tensor(np.ones(3)), Tensor(np.ones((2, 4))), Tensor(np.ones(2)))


def test_relu_and_maxpool_values():
    assert ad.relu(Tensor([-1.0, 2.0])).data.tolist() == [0, 2]
    assert ad.maxpool2d(Tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2).data.tolist() == [[[4.0]]]


def test_maxpool_tie_goes_to_first_index():
    x = Tensor([[[5.0, 5.0], [0.0, 0.0]]], requires_grad=True)
    ad.maxpool2d(x, 2).sum().backward()
    np.testing.assert_array_equal(x.grad, [[[1, 0], [0, 0]]])


def test_maxpool_window_too_large():
    with pytest.raises(ShapeError):
        ad.maxpool2d(Tensor(np.ones((1, 2, 2))), 3)


def test_cross_entropy_closed_forms():
    for target in range(4):
        assert ad.softmax_cross_entropy(Tensor(np.zeros(4)), target).item() == pytest.approx(np.log(4), abs=1e-15)
    assert ad.softmax_cross_entropy(Tensor([10.0, 0.0]), 0).item() < 1e-4
    assert np.isfinite(ad.softmax_cross_entropy(Tensor([1000.0, -1000.0]), 1).item())


def test_cross_entropy_gradient():
    z = np.random.default_rng(4).normal(size=5)
    logits = Tensor(z, requires_grad=True)
    ad.softmax_cross_entropy(logits, 2).backward()
    onehot = np.eye(5)[2]
    np.testing.assert_allclose(logits.grad, ad.softmax(z) - onehot, atol=1e-15)
    fd = numeric_grad(lambda: ad.softmax_cross_entropy(Tensor(z), 2).item(), z)
    assert rel_err(logits.grad, fd) < 1e-6


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        ad.softmax_cross_entropy(Tensor(np.zeros(3)), 3)
    with pytest.raises(IndexError):
        ad.softmax_cross_entropy(Tensor(np.zeros(3)), -1)


def test_backward_basics():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones(3))
    y = Tensor([3.0], requires_grad=True)
    ad.mul(y, y).sum().backward()
    assert y.grad.tolist() == [6.0]


def test_shared_subexpression_sums():
    x = Tensor([1.0], requires_grad=True)
    ad.add(x, x).sum().backward()
    assert x.grad.tolist() == [2.0]


def test_repeated_backward_accumulates_until_reset():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = ad.mul(x, x).sum()
    loss.backward()
    loss.backward()
    np.testing.assert_array_equal(x.grad, [4.0, 8.0])
    ad.zero_grad(x)
    assert x.grad is None


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0], requires_grad=True).backward()


def test_intermediate_nodes_get_gradients():
    x = Tensor([1.0, 2.0], requires_grad=True)
    h = ad.scale(x, 3.0)
    ad.mul(h, h).sum().backward()
    np.testing.assert_array_equal(h.grad, 2 * h.data)
    np.testing.assert_array_equal(x.grad, 18 * x.data)


def test_composite_graph_against_finite_differences():
    rng = np.random.default_rng(5)
    x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    k = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    kb = Tensor(rng.normal(size=3), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 27)), requires_grad=True)
    b = Tensor(rng.normal(size=4), requires_grad=True)
    leaves = (x, k, kb, w, b)

    def forward(ts):
        h = ad.relu(ad.conv2d(ts[0], ts[1], ts[2], padding=1))
        h = ad.flatten(ad.maxpool2d(h, 2))
        return ad.softmax_cross_entropy(ad.dense(h, ts[3], ts[4]), 1)

    forward(leaves).backward()
    for t in leaves:
        fd = numeric_grad(lambda: forward([Tensor(l.data) for l in leaves]).item(), t.data)
        assert rel_err(t.grad, fd) < 1e-5


def test_expand_sums_over_leading_axes():
    m = Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
    out = ad.expand(m, (3, 2, 2))
    assert out.shape == (3, 2, 2)
    out.sum().backward()
    np.testing.assert_array_equal(m.grad, np.full((2, 2), 3.0))
    with pytest.raises(ShapeError):
        ad.expand(m, (3, 2))


def test_batched_conv_matches_per_image():
    rng = np.random.default_rng(6)
    xs, k = rng.normal(size=(3, 2, 5, 5)), rng.normal(size=(4, 2, 3, 3))
    batched = ad.conv2d(Tensor(xs), Tensor(k), padding=1).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], ad.conv2d(Tensor(xs[i]), Tensor(k), padding=1).data, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    arrays(np.float64, (2, 3), elements=st.floats(-3, 3)),
    arrays(np.float64, (2, 3), elements=st.floats(-3, 3)),
)
def test_elementwise_gradients_property(a, b):
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    coef = np.linspace(-1, 1, 6).reshape(2, 3)
    ad.mul(ad.sub(ad.mul(ta, tb), ad.scale(ta, 0.5)), Tensor(coef)).sum().backward()
    np.testing.assert_allclose(ta.grad, coef * (b - 0.5), atol=1e-12)
    np.testing.assert_allclose(tb.grad, coef * a, atol=1e-12)


def test_forward_is_deterministic():
    rng = np.random.default_rng(7)
    x, k = rng.normal(size=(1, 8, 8)), rng.normal(size=(2, 1, 3, 3))
    a = ad.conv2d(Tensor(x), Tensor(k), padding=1).data
    b = ad.conv2d(Tensor(x), Tensor(k), padding=1).data
    assert np.array_equal(a, b)
