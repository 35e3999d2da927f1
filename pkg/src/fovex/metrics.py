"""Faithfulness, localisation and gaze-agreement metrics for attribution maps.

Maps are ``[H, W]`` arrays; images are ``[C, H, W]``.  Predictors only need a
``forward`` accepting a ``[N, C, H, W]`` tensor and returning ``[N, classes]``
logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, softmax


@dataclass(frozen=True)
class BoundingBox:
    top: int
    left: int
    height: int
    width: int

    def check(self, shape):
        h, w = shape
        if self.height < 1 or self.width < 1:
            raise ValueError(f"box {self} has no area")
        if self.top < 0 or self.left < 0 or self.top + self.height > h or self.left + self.width > w:
            raise ValueError(f"box {self} outside {h}x{w} map")


def class_scores(b, images, target, batch_size=128):
    """Softmax probability of ``target`` for every image in a stack."""
    images = np.asarray(images, dtype=np.float64)
    out = []
    for start in range(0, len(images), batch_size):
        logits = b.forward(Tensor(images[start:start + batch_size])).data
        out.append(softmax(logits)[:, target])
    return np.concatenate(out)


def _map(m):
    return np.asarray(getattr(m, "grid", m), dtype=np.float64)


# -- avg % drop / increase --------------------------------------------------------


def confidence_change(b, image, saliency, target):
    """Target score on the full image and on ``image * map`` (map shared by all channels)."""
    image = np.asarray(image, dtype=np.float64)
    masked = image * _map(saliency)[None]
    full, kept = class_scores(b, np.stack([image, masked]), target)
    return float(full), float(kept)


def avg_drop_increase(b, images, maps, targets):
    """Average % drop and % increase in confidence under explanation masking.

    Per image, with ``Y`` the score on the full image and ``O`` on the masked
    image: drop is ``max(0, Y - O) / Y`` and increase is ``O > Y``.  Both are
    averaged and reported in percent.  Images with ``Y == 0`` are skipped;
    their count is the third return value.
    """
    drops, increases, skipped = [], [], 0
    for image, saliency, target in zip(images, maps, targets):
        y, o = confidence_change(b, image, saliency, target)
        if y == 0:
            skipped += 1
            continue
        drops.append(max(0.0, y - o) / y)
        increases.append(float(o > y))
    if not drops:
        return float("nan"), float("nan"), skipped
    return 100.0 * float(np.mean(drops)), 100.0 * float(np.mean(increases)), skipped


# -- deletion / insertion ---------------------------------------------------------


def saliency_order(saliency):
    """Pixel indices by descending saliency; ties in row-major order."""
    return np.argsort(-_map(saliency).ravel(), kind="stable")


def trapezoid(x, y):
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def perturbation_curve(b, image, saliency, target, step_fraction=0.01, mode="delete", baseline=None):
    """Fractions of pixels changed and the target score after each step.

    ``delete`` starts from the image and sets ranked pixels to ``baseline``
    (zeros by default); ``insert`` starts from ``baseline`` (required) and
    restores ranked pixels from the image.  Step 0 and the final state are
    both included.
    """
    if not 0 < step_fraction <= 1:
        raise ValueError(f"step_fraction must lie in (0, 1], got {step_fraction}")
    image = np.asarray(image, dtype=np.float64)
    c, h, w = image.shape
    if _map(saliency).shape != (h, w):
        raise ValueError(f"map {_map(saliency).shape} does not cover image {image.shape}")
    if mode == "delete":
        start, finish = image, np.zeros_like(image) if baseline is None else np.asarray(baseline, dtype=np.float64)
    elif mode == "insert":
        if baseline is None:
            raise ValueError("insert needs a baseline image")
        start, finish = np.asarray(baseline, dtype=np.float64), image
    else:
        raise ValueError(f"mode must be 'delete' or 'insert', got {mode!r}")
    n = h * w
    per_step = max(1, math.ceil(step_fraction * n - 1e-9))
    order = saliency_order(saliency)
    counts = list(range(0, n, per_step)) + [n]
    frames = np.empty((len(counts), c, n))
    current = start.reshape(c, n).copy()
    target_flat = finish.reshape(c, n)
    done = 0
    for k, count in enumerate(counts):
        idx = order[done:count]
        current[:, idx] = target_flat[:, idx]
        done = count
        frames[k] = current
    scores = class_scores(b, frames.reshape(len(counts), c, h, w), target)
    return np.asarray(counts, dtype=np.float64) / n, scores


def delete_insert_auc(b, image, saliency, target, step_fraction=0.01, mode="delete", baseline=None):
    """Area under the deletion or insertion curve (trapezoidal rule)."""
    x, y = perturbation_curve(b, image, saliency, target, step_fraction, mode, baseline)
    return trapezoid(x, y)


def is_degenerate(saliency):
    m = _map(saliency)
    return bool(m.max() == m.min())


# -- localisation ---------------------------------------------------------------


def ebpg(saliency, boxes):
    """Share of total map energy inside the union of ``boxes``."""
    m = _map(saliency)
    boxes = list(boxes)
    if not boxes:
        raise ValueError("ebpg needs at least one box")
    if np.any(m < 0):
        raise ValueError("ebpg needs a non-negative map")
    inside = np.zeros(m.shape, dtype=bool)
    for box in boxes:
        box = box if isinstance(box, BoundingBox) else BoundingBox(*box)
        box.check(m.shape)
        inside[box.top:box.top + box.height, box.left:box.left + box.width] = True
    total = m.sum()
    if total == 0:
        return 0.0
    return float(m[inside].sum() / total)


# -- human-gaze agreement -------------------------------------------------------


def _fixation_index(fixations, shape):
    pts = np.asarray(fixations, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("no fixations given")
    h, w = shape
    if np.any(pts < 0) or np.any(pts[:, 0] >= h) or np.any(pts[:, 1] >= w):
        raise ValueError(f"fixation outside {h}x{w} map")
    return pts[:, 0], pts[:, 1]


def nss(saliency, fixations):
    """Mean of the z-scored map (population std) at fixated pixels; 0 for a flat map."""
    m = _map(saliency)
    rows, cols = _fixation_index(fixations, m.shape)
    std = m.std()
    if std == 0:
        return 0.0
    return float(np.mean((m[rows, cols] - m.mean()) / std))


def aucj(saliency, fixations):
    """AUC-Judd: thresholds at the saliency of each fixated pixel.

    TPR is the share of fixations at or above the threshold, FPR the share of
    all pixels at or above it; the curve is closed with (0, 0) and (1, 1).
    """
    m = _map(saliency)
    rows, cols = _fixation_index(fixations, m.shape)
    at_fix = m[rows, cols]
    thresholds = np.unique(at_fix)[::-1]
    flat = np.sort(m.ravel())
    n = flat.size
    tpr = [0.0]
    fpr = [0.0]
    for t in thresholds:
        tpr.append(np.count_nonzero(at_fix >= t) / at_fix.size)
        fpr.append((n - np.searchsorted(flat, t, side="left")) / n)
    tpr.append(1.0)
    fpr.append(1.0)
    return trapezoid(fpr, tpr)
