"""Batch evaluation of an explanation method over a set of images."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import metrics as M
from .attribution import build_map, random_cam, scanpath_weights
from .errors import DataError, ShapeError
from .foveation import coarse
from .scanpath import generate_scanpath
from .seeds import stream_seed

log = logging.getLogger(__name__)

METHODS = ("fovex", "random_cam")


@dataclass
class EvaluationReport:
    method: str
    metrics: list
    records: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    dataset: str = ""
    n_input: int = 0
    n_misclassified: int = 0
    n_zero_score: int = 0
    n_degenerate: int = 0

    def to_dict(self):
        return {
            "method": self.method,
            "dataset": self.dataset,
            "metrics": list(self.metrics),
            "counts": {
                "input": self.n_input,
                "evaluated": len(self.records),
                "misclassified": self.n_misclassified,
                "zero_score": self.n_zero_score,
                "degenerate_maps": self.n_degenerate,
            },
            "aggregate": self.aggregate,
            "images": self.records,
            "config": self.config,
        }

    def to_text(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def explain(b, image, cfg, label=None):
    """FovEx attribution map and scanpath for one image under a RunConfig."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[1:]
    fov = cfg.foveation(w)
    sp = generate_scanpath(b, image, cfg.scanpath(), fov, label=label)
    sigma = cfg.sigma_attr(w)
    amap = build_map(sp, scanpath_weights(sp, cfg.weighting), sigma, h, w,
                     config={"weighting": cfg.weighting})
    return amap, sp


def _aggregate(records, names):
    out = {}
    for name in names:
        values = [r[name] for r in records if r.get(name) is not None]
        out[name] = float(np.mean(values)) if values else None
    return out


def evaluate_batch(b, items, method, cfg, dataset_id=""):
    """Filter to correctly classified images, build maps, score them.

    ``cfg.metrics`` selects metrics; ``cfg.max_images`` (if > 0) stops after
    that many evaluated images.  Box-based and gaze-based metrics are
    ``None`` for images lacking the respective annotation.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    names = list(cfg.metrics)
    report = EvaluationReport(method, names, config=cfg.snapshot(), dataset=dataset_id, n_input=len(items))
    for index, item in enumerate(items):
        if cfg.max_images and len(report.records) >= cfg.max_images:
            break
        image = np.asarray(item.image, dtype=np.float64)
        if tuple(image.shape) != tuple(b.input_shape):
            raise ShapeError(f"{item.id}: image shape {image.shape} does not match predictor input {b.input_shape}")
        if b.predict(image) != item.label:
            report.n_misclassified += 1
            continue
        h, w = image.shape[1:]
        if method == "fovex":
            amap, _ = explain(b, image, cfg, label=item.label)
        else:
            amap = random_cam((stream_seed(cfg.seed, "random_cam"), index), h, w)
        record = {"id": item.id, "index": index, "label": item.label}
        degenerate = M.is_degenerate(amap)
        report.n_degenerate += degenerate
        record["degenerate"] = degenerate
        target = item.label
        if "drop" in names or "increase" in names:
            y, o = M.confidence_change(b, image, amap, target)
            if y == 0:
                report.n_zero_score += 1
                drop = inc = None
            else:
                drop, inc = 100.0 * max(0.0, y - o) / y, 100.0 * float(o > y)
            if "drop" in names:
                record["drop"] = drop
            if "increase" in names:
                record["increase"] = inc
        if "delete" in names:
            record["delete"] = M.delete_insert_auc(b, image, amap, target, cfg.step_fraction, "delete")
        if "insert" in names:
            fov = cfg.foveation(w)
            blurred = coarse(image, fov.sigma_b, fov.blur_radius).data
            record["insert"] = M.delete_insert_auc(b, image, amap, target, cfg.step_fraction, "insert", blurred)
        if "ebpg" in names:
            record["ebpg"] = M.ebpg(amap, item.boxes) if item.boxes else None
        if "nss" in names:
            record["nss"] = M.nss(amap, item.fixations) if item.fixations is not None else None
        if "aucj" in names:
            record["aucj"] = M.aucj(amap, item.fixations) if item.fixations is not None else None
        report.records.append(record)
    if not report.records:
        raise DataError(f"no correctly classified images among {len(items)} inputs")
    if report.n_zero_score:
        log.warning("%d image(s) had zero target score and were left out of drop/increase", report.n_zero_score)
    report.aggregate = _aggregate(report.records, names)
    return report
