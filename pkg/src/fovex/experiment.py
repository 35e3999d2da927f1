"""Toy reproduction: does FovEx localise the object better than RandomCAM?

Trains the toy predictor on the blob-quadrant data, then scores both
methods on the same correctly classified test images.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from .dataset_io import items_from_dataset, synthetic_gaze
from .evaluation import evaluate_batch
from .predictor import accuracy, generate_synthetic, train_toy
from .seeds import stream_seed

log = logging.getLogger(__name__)


@dataclass
class ToyResult:
    accuracy: float
    reports: dict
    seconds: float

    def mean(self, method, metric):
        return self.reports[method].aggregate[metric]


def run_toy_experiment(cfg, n_eval=100, methods=("fovex", "random_cam")):
    """Train on synthetic data from ``cfg`` and evaluate ``n_eval`` images per method."""
    start = time.perf_counter()
    size, k = cfg.image_size, cfg.n_classes
    train = generate_synthetic(stream_seed(cfg.seed, "train_data"), cfg.train_samples, size, k, cfg.channels)
    test = generate_synthetic(stream_seed(cfg.seed, "test_data"), cfg.test_samples, size, k, cfg.channels)
    predictor = train_toy(cfg.training(), train).predictor
    acc = accuracy(predictor, test.images, test.labels)
    log.info("held-out accuracy %.4f", acc)
    items = items_from_dataset(test, synthetic_gaze(test, stream_seed(cfg.seed, "gaze")))
    eval_cfg = cfg.replace(max_images=n_eval)
    reports = {m: evaluate_batch(predictor, items, m, eval_cfg, dataset_id="synthetic") for m in methods}
    return ToyResult(acc, reports, time.perf_counter() - start)
