"""Differentiable foveation.

An image ``x`` is paired with a blurred copy ``x_bar``.  A visibility mask
``G`` in ``[0, 1]`` selects per pixel between the two: ``G * x + (1 - G) * x_bar``.
Masks are built from unnormalised Gaussian blobs centred on fixations, and
the blob is differentiable with respect to its centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError


@dataclass(frozen=True)
class FoveationConfig:
    """Foveation parameters, all lengths in pixels.

    ``radius`` of ``None`` means ``ceil(3 * sigma_b)``.
    """

    sigma_f: float
    sigma_b: float
    beta: float = 0.9
    radius: int | None = None

    def __post_init__(self):
        if not self.sigma_f > 0:
            raise ValueError(f"sigma_f must be > 0, got {self.sigma_f}")
        if not self.sigma_b > 0:
            raise ValueError(f"sigma_b must be > 0, got {self.sigma_b}")
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.radius is not None and self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")

    @classmethod
    def for_width(cls, width, **overrides):
        """Defaults scaled to the image: fovea width/8, blur width/16."""
        params = dict(sigma_f=width / 8, sigma_b=width / 16)
        params.update(overrides)
        return cls(**params)

    @property
    def blur_radius(self):
        return self.radius if self.radius is not None else max(1, math.ceil(3 * self.sigma_b))


def gaussian_kernel(sigma, radius):
    """Normalised 1D Gaussian sampled at integer offsets ``-radius..radius``."""
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    if sigma == 0:
        return (offsets == 0).astype(np.float64)
    k = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    return k / k.sum()


def coarse(x, sigma_b, radius=None):
    """Per-channel Gaussian blur with reflective borders, returned as a constant tensor."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if data.ndim != 3:
        raise ShapeError(f"coarse expects [C, H, W], got {data.shape}")
    if radius is None:
        radius = max(1, math.ceil(3 * sigma_b))
    k = gaussian_kernel(sigma_b, radius)
    c, h, w = data.shape
    planes = Tensor(np.pad(data, ((0, 0), (radius, radius), (radius, radius)), mode="reflect")[:, None])
    rows = ad.conv2d(planes, Tensor(k.reshape(1, 1, -1, 1)))
    out = ad.conv2d(rows, Tensor(k.reshape(1, 1, 1, -1)))
    return Tensor(out.data[:, 0])


def blob(f, sigma_f, height, width):
    """``exp(-((r - f_r)^2 + (c - f_c)^2) / (2 sigma_f^2))`` on the pixel grid.

    ``f`` is a length-2 tensor ``(row, col)``; the result is differentiable
    with respect to it.
    """
    f = f if isinstance(f, Tensor) else Tensor(np.asarray(f, dtype=np.float64))
    if f.shape != (2,):
        raise ShapeError(f"fixation must have shape (2,), got {f.shape}")
    dr = np.arange(height, dtype=np.float64)[:, None] - f.data[0]
    dc = np.arange(width, dtype=np.float64)[None, :] - f.data[1]
    var = float(sigma_f) ** 2
    value = np.exp(-(dr ** 2 + dc ** 2) / (2.0 * var))

    def backward(g):
        gv = g * value / var
        return (np.array([np.sum(gv * dr), np.sum(gv * dc)]),)

    return Tensor.from_op(value, (f,), backward, "blob")


def _blend(x, x_bar, mask):
    if x.shape != x_bar.shape:
        raise ShapeError(f"image and coarse image differ: {x.shape} vs {x_bar.shape}")
    if x.ndim != 3 or mask.shape != x.shape[1:]:
        raise ShapeError(f"mask {mask.shape} does not fit image {x.shape}")
    m = ad.expand(mask, x.shape)
    return ad.add(ad.mul(m, x), ad.mul(1.0 - m, x_bar))


def foveate(x, x_bar, f, sigma_f):
    """Sharp near ``f``, blurred far from it."""
    x, x_bar = _tensor(x), _tensor(x_bar)
    return _blend(x, x_bar, blob(f, sigma_f, x.shape[1], x.shape[2]))


@dataclass
class FoveationState:
    """Accumulated visibility ``mask`` (``[H, W]`` tensor) after ``t`` fixations."""

    mask: Tensor
    t: int = 0

    @classmethod
    def initial(cls, height, width):
        return cls(Tensor(np.zeros((height, width))), 0)

    def committed(self):
        """The same state with its mask cut from any graph."""
        return FoveationState(self.mask.detach(), self.t)


def update_state(state, f, sigma_f, beta):
    """``G_t = clamp(beta * G_{t-1} + blob(f), 0, 1)``.

    The previous mask is treated as a constant, so gradients reach only the
    newest fixation.
    """
    h, w = state.mask.shape
    prior = Tensor(beta * state.mask.data)
    mask = ad.clamp(ad.add(prior, blob(f, sigma_f, h, w)), 0.0, 1.0)
    return FoveationState(mask, state.t + 1)


def render_state(x, x_bar, state):
    """``G * x + (1 - G) * x_bar`` with ``G`` applied to every channel."""
    return _blend(_tensor(x), _tensor(x_bar), state.mask)


def _tensor(v):
    return v if isinstance(v, Tensor) else Tensor(v)
