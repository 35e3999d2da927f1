"""Attribution maps from scanpaths, the random baseline, and heatmap rendering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pnm


@dataclass
class AttributionMap:
    """Relevance grid in ``[0, 1]`` plus where it came from."""

    grid: np.ndarray
    source: str = "fovex"
    config: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.grid.shape


def minmax(values):
    """Min-max normalise to ``[0, 1]``; a constant input maps to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def gaussian_sum(centers, weights, sigma, height, width):
    """Unnormalised weighted sum of isotropic Gaussians (peak 1 each)."""
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    total = np.zeros((height, width))
    sigmas = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (len(centers),))
    for (r, c), a, s in zip(centers, weights, sigmas):
        total += a * np.exp(-((rows - r) ** 2 + (cols - c) ** 2) / (2.0 * s ** 2))
    return total


def build_map(fixations, weights, sigma, height, width, source="fovex", config=None):
    """Min-max normalised ``sum_i weights[i] * gaussian(fixations[i], sigma)``."""
    fixations = [tuple(f) for f in (fixations.fixations if hasattr(fixations, "fixations") else fixations)]
    if not fixations:
        raise ValueError("cannot build an attribution map from an empty scanpath")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(fixations),):
        raise ValueError(f"{len(fixations)} fixations but {weights.size} weights")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("weights must be non-negative and not all zero")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    grid = minmax(gaussian_sum(fixations, weights, sigma, height, width))
    cfg = {"sigma": float(sigma), "n_fixations": len(fixations)}
    cfg.update(config or {})
    return AttributionMap(grid, source, cfg)


def confidence_gain_weights(scanpath):
    """Weight each fixation by how much it raised the target score.

    The gain of fixation ``i`` is its score minus the previous one (the
    score on the blurred image for ``i = 1``), floored at zero.  When no
    fixation helped, all weights are 1.
    """
    scores = np.asarray([scanpath.base_score] + list(scanpath.scores), dtype=np.float64)
    gains = np.maximum(np.diff(scores), 0.0)
    if not np.any(gains > 0):
        return np.ones(len(scanpath))
    return gains


def scanpath_weights(scanpath, mode="uniform"):
    if mode == "uniform":
        return np.ones(len(scanpath))
    if mode == "confidence":
        return confidence_gain_weights(scanpath)
    raise ValueError(f"unknown weighting mode {mode!r}")


def random_cam(seed, height, width, blob_count=(1, 6), sigma_range=None):
    """Random-Gaussian-mixture baseline.

    Draws a blob count uniformly from ``blob_count`` (inclusive), centres
    uniformly over the image, and widths uniformly from ``sigma_range``
    (default ``width/16 .. width/4``).
    """
    lo_n, hi_n = blob_count
    if lo_n < 1 or hi_n < lo_n:
        raise ValueError(f"bad blob count range {blob_count}")
    if sigma_range is None:
        sigma_range = (width / 16, width / 4)
    lo_s, hi_s = sigma_range
    if not 0 < lo_s <= hi_s:
        raise ValueError(f"bad sigma range {sigma_range}")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(lo_n, hi_n + 1))
    centers = np.column_stack([rng.uniform(0, height - 1, n), rng.uniform(0, width - 1, n)])
    sigmas = rng.uniform(lo_s, hi_s, n)
    grid = minmax(gaussian_sum(centers, np.ones(n), sigmas, height, width))
    seed_repr = int(seed) if np.ndim(seed) == 0 else [int(v) for v in seed]
    return AttributionMap(grid, "random", {"seed": seed_repr, "n_blobs": n})


def quantize(grid):
    """``[0, 1]`` floats to 8-bit with round-half-up."""
    return np.floor(np.clip(grid, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def render_heatmap(amap, path, overlay=None, overlay_path=None):
    """Write the map as a binary graymap; optionally blend it over an image into a pixmap.

    The overlay scales image brightness by ``0.25 + 0.75 * map``, so
    irrelevant regions fade.  ``overlay`` is a ``[C, H, W]`` array in ``[0, 1]``.
    """
    comment = f"source={amap.source} " + " ".join(f"{k}={v}" for k, v in sorted(amap.config.items()))
    pnm.write_pgm(path, quantize(amap.grid), comment=comment.strip())
    if overlay is not None:
        if overlay_path is None:
            raise ValueError("overlay_path is required when an overlay image is given")
        img = np.asarray(overlay, dtype=np.float64)
        if img.shape[0] == 1:
            img = np.repeat(img, 3, axis=0)
        blended = img * (0.25 + 0.75 * amap.grid)[None]
        pnm.write_ppm(overlay_path, quantize(blended).transpose(1, 2, 0), comment=comment.strip())
