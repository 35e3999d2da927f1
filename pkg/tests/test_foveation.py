import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fovex import autodiff as ad
from fovex.autodiff import Tensor
from fovex.foveation import (
    FoveationConfig,
    FoveationState,
    blob,
    coarse,
    foveate,
    gaussian_kernel,
    render_state,
    update_state,
)
from fovex.predictor import build_toy

from conftest import numeric_grad, rel_err


def test_config_validation():
    with pytest.raises(ValueError):
        FoveationConfig(sigma_f=0, sigma_b=1)
    with pytest.raises(ValueError):
        FoveationConfig(sigma_f=1, sigma_b=1, beta=1.5)
    with pytest.raises(ValueError):
        FoveationConfig(sigma_f=1, sigma_b=1, radius=0)
    cfg = FoveationConfig.for_width(64)
    assert (cfg.sigma_f, cfg.sigma_b, cfg.blur_radius) == (8.0, 4.0, 12)


def test_coarse_keeps_constant_image():
    x = np.full((2, 9, 7), 0.3)
    np.testing.assert_allclose(coarse(x, 2.0, 5).data, x, atol=1e-15)


def test_coarse_with_delta_kernel_is_identity():
    x = np.random.default_rng(0).uniform(size=(3, 6, 6))
    np.testing.assert_array_equal(coarse(x, 1e-9, 3).data, x)


def test_coarse_impulse_row_matches_kernel_samples():
    # a single bright column blurs horizontally into the normalised Gaussian
    x = np.zeros((1, 1, 15))
    x[0, 0, 7] = 1.0
    out = coarse(x, 1.0, 3).data[0, 0]
    offsets = np.arange(-3, 4)
    expected = np.exp(-offsets ** 2 / 2.0) / np.exp(-offsets ** 2 / 2.0).sum()
    np.testing.assert_allclose(out[4:11], expected, atol=1e-15)
    assert np.all(out[:4] == 0) and np.all(out[11:] == 0)


def test_coarse_uses_reflection_at_borders():
    x = np.zeros((1, 1, 6))
    x[0, 0, 1] = 1.0
    out = coarse(x, 1.0, 2).data[0, 0]
    k = gaussian_kernel(1.0, 2)
    # padding mirrors about the edge pixel: [x2, x1, x0, x1, x2, ...]
    assert out[0] == pytest.approx(k[1] + k[3], abs=1e-15)
    assert out[1] == pytest.approx(k[0] + k[2], abs=1e-15)


def test_blob_peak_and_closed_form():
    b = blob(Tensor([2.0, 3.0]), 1.0, 5, 6).data
    assert b[2, 3] == 1.0
    assert b[3, 3] == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert b[2, 2] == pytest.approx(0.6065306597, abs=1e-10)


def test_blob_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(5):
        f = rng.uniform(0, 9, size=2)
        coef = rng.normal(size=(10, 10))
        ft = Tensor(f, requires_grad=True)
        ad.mul(blob(ft, 2.5, 10, 10), Tensor(coef)).sum().backward()
        fd = numeric_grad(lambda: float(np.sum(blob(f, 2.5, 10, 10).data * coef)), f)
        assert rel_err(ft.grad, fd) < 1e-6


def test_blob_radial_symmetry():
    b = blob([4.0, 4.0], 1.7, 9, 9).data
    np.testing.assert_array_equal(b, b.T)
    np.testing.assert_array_equal(b, b[::-1, ::-1])


def test_foveate_identities():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(3, 7, 7))
    np.testing.assert_allclose(foveate(x, x, [2.3, 4.1], 1.5).data, x, atol=1e-15)
    xb = rng.uniform(size=(3, 7, 7))
    out = foveate(x, xb, [3.0, 2.0], 1.5).data
    np.testing.assert_array_equal(out[:, 3, 2], x[:, 3, 2])


def test_foveate_scalar_blend_at_distance_one():
    x, xb = np.ones((1, 3, 3)), np.zeros((1, 3, 3))
    out = foveate(x, xb, [1.0, 1.0], 1.0).data
    assert out[0, 1, 2] == pytest.approx(0.6065306597126334, abs=1e-15)


def test_foveate_shape_mismatch():
    from fovex.errors import ShapeError
    with pytest.raises(ShapeError):
        foveate(np.zeros((1, 3, 3)), np.zeros((1, 3, 4)), [1, 1], 1.0)


def test_update_state_memoryless_and_saturating():
    s0 = FoveationState.initial(5, 5)
    assert s0.t == 0 and not s0.mask.data.any()
    s1 = update_state(s0, [2.0, 2.0], 1.0, 0.0)
    np.testing.assert_array_equal(s1.mask.data, np.clip(blob([2.0, 2.0], 1.0, 5, 5).data, 0, 1))
    s2 = update_state(update_state(s0, [2.0, 2.0], 1.0, 1.0), [2.0, 2.0], 1.0, 1.0)
    assert s2.mask.data[2, 2] == 1.0 and s2.t == 2


def test_update_state_matches_scalar_accumulation():
    beta, sigma = 0.5, 1.2
    fixations = [(1.0, 1.0), (3.5, 2.0)]
    state = FoveationState.initial(5, 5)
    for f in fixations:
        state = update_state(state, f, sigma, beta).committed()
    for r in range(5):
        for c in range(5):
            g = 0.0
            for fr, fc in fixations:
                g = min(1.0, max(0.0, beta * g + math.exp(-((r - fr) ** 2 + (c - fc) ** 2) / (2 * sigma ** 2))))
            assert state.mask.data[r, c] == pytest.approx(g, abs=1e-15)


def test_past_fixations_are_constant():
    state = update_state(FoveationState.initial(6, 6), [1.0, 1.0], 1.5, 0.8)
    f = Tensor([4.0, 4.0], requires_grad=True)
    new = update_state(state, f, 1.5, 0.8)
    new.mask.sum().backward()
    assert f.grad is not None
    # the committed mask carries no graph of its own
    assert state.committed().mask.is_leaf


def test_render_state_extremes_and_mixed():
    rng = np.random.default_rng(3)
    x, xb = rng.uniform(size=(2, 2, 2)), rng.uniform(size=(2, 2, 2))
    zeros = FoveationState(Tensor(np.zeros((2, 2))))
    ones = FoveationState(Tensor(np.ones((2, 2))))
    np.testing.assert_array_equal(render_state(x, xb, zeros).data, xb)
    np.testing.assert_array_equal(render_state(x, xb, ones).data, x)
    g = np.array([[0.25, 0.5], [0.75, 0.1]])
    out = render_state(x, xb, FoveationState(Tensor(g))).data
    for ch in range(2):
        for r in range(2):
            for c in range(2):
                assert out[ch, r, c] == pytest.approx(g[r, c] * x[ch, r, c] + (1 - g[r, c]) * xb[ch, r, c], abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.5, 4.0), st.floats(0, 1))
def test_blend_is_convex(seed, sigma, beta):
    rng = np.random.default_rng(seed)
    x, xb = rng.uniform(size=(3, 8, 8)), rng.uniform(size=(3, 8, 8))
    lo, hi = np.minimum(x, xb) - 1e-12, np.maximum(x, xb) + 1e-12
    out = foveate(x, xb, rng.uniform(0, 7, 2), sigma).data
    assert np.all(out >= lo) and np.all(out <= hi)
    state = FoveationState.initial(8, 8)
    for _ in range(3):
        state = update_state(state, rng.uniform(0, 7, 2), sigma, beta).committed()
    out = render_state(x, xb, state).data
    assert np.all(out >= lo) and np.all(out <= hi)


def test_mask_monotone_without_forgetting():
    rng = np.random.default_rng(4)
    state = FoveationState.initial(10, 10)
    for _ in range(6):
        new = update_state(state, rng.uniform(0, 9, 2), 2.0, 1.0).committed()
        assert np.all(new.mask.data >= state.mask.data)
        state = new


def test_pipeline_gradient_matches_finite_differences():
    p = build_toy((3, 16, 16), 2, seed=8)
    rng = np.random.default_rng(5)
    x = rng.uniform(size=(3, 16, 16))
    xb = coarse(x, 1.0)
    prior = update_state(FoveationState.initial(16, 16), [4.0, 5.0], 3.0, 0.7).committed()

    def loss_at(f):
        state = update_state(prior, f, 3.0, 0.7)
        return ad.softmax_cross_entropy(p.forward(render_state(x, xb, state)), 1)

    f = np.array([9.3, 7.6])
    ft = Tensor(f, requires_grad=True)
    loss_at(ft).backward()
    fd = numeric_grad(lambda: loss_at(f).item(), f)
    assert rel_err(ft.grad, fd) < 1e-4
