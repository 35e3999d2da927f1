"""Run configuration: a flat ``key = value`` text file.

Every key has a default, so an empty file is valid.  ``#`` starts a comment.
Pixel-valued keys accept ``auto``, which resolves relative to the image
width when the run starts.

Randomness comes from the single ``seed``; a component with stream id ``k``
uses ``seed + k`` (see ``STREAMS``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .errors import ConfigError
from .foveation import FoveationConfig
from .predictor import TrainConfig
from .scanpath import ScanpathConfig
from .seeds import STREAMS, stream_seed  # noqa: F401

METRICS = ("drop", "increase", "delete", "insert", "ebpg", "nss", "aucj")


@dataclass
class RunConfig:
    # data, sizes in pixels
    image_size: int = 64
    channels: int = 3
    n_classes: int = 2
    train_samples: int = 2000
    test_samples: int = 500
    dataset_dir: str = ""
    # training
    epochs: int = 4
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    label_smoothing: float = 0.1
    # foveation, pixels
    sigma_f: float | None = None
    sigma_b: float | None = None
    beta: float = 0.9
    blur_radius: int | None = None
    # scanpath
    n_fixations: int = 10
    step_size: float | None = None
    inner_steps: int = 1
    init: str = "center"
    target: str = "predicted"
    # attribution
    sigma_eps: float | None = None
    weighting: str = "uniform"
    # metrics
    step_fraction: float = 0.01
    metrics: tuple = METRICS
    max_images: int = 0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            ("image_size", self.image_size >= 8, "must be >= 8"),
            ("channels", self.channels in (1, 3), "must be 1 or 3"),
            ("n_classes", self.n_classes in (2, 4), "must be 2 or 4"),
            ("train_samples", self.train_samples >= 1, "must be >= 1"),
            ("test_samples", self.test_samples >= 1, "must be >= 1"),
            ("epochs", self.epochs >= 1, "must be >= 1"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("learning_rate", self.learning_rate >= 0, "must be >= 0"),
            ("momentum", 0 <= self.momentum < 1, "must lie in [0, 1)"),
            ("label_smoothing", 0 <= self.label_smoothing < 1, "must lie in [0, 1)"),
            ("sigma_f", self.sigma_f is None or self.sigma_f > 0, "must be > 0"),
            ("sigma_b", self.sigma_b is None or self.sigma_b > 0, "must be > 0"),
            ("beta", 0 <= self.beta <= 1, "must lie in [0, 1]"),
            ("blur_radius", self.blur_radius is None or self.blur_radius >= 1, "must be >= 1"),
            ("n_fixations", self.n_fixations >= 1, "must be >= 1"),
            ("step_size", self.step_size is None or self.step_size > 0, "must be > 0"),
            ("inner_steps", self.inner_steps >= 1, "must be >= 1"),
            ("init", self.init in ("center", "random"), "must be 'center' or 'random'"),
            ("target", self.target in ("predicted", "label"), "must be 'predicted' or 'label'"),
            ("sigma_eps", self.sigma_eps is None or self.sigma_eps > 0, "must be > 0"),
            ("weighting", self.weighting in ("uniform", "confidence"), "must be 'uniform' or 'confidence'"),
            ("step_fraction", 0 < self.step_fraction <= 1, "must lie in (0, 1]"),
            ("max_images", self.max_images >= 0, "must be >= 0"),
        ]
        for name, ok, message in checks:
            if not ok:
                raise ConfigError(name, f"{message}, got {getattr(self, name)!r}")
        unknown = [m for m in self.metrics if m not in METRICS]
        if unknown:
            raise ConfigError("metrics", f"unknown metric(s) {', '.join(unknown)}; choose from {', '.join(METRICS)}")

    # -- derived module configs ------------------------------------------------

    def foveation(self, width=None):
        width = width or self.image_size
        return FoveationConfig(
            sigma_f=self.sigma_f if self.sigma_f is not None else width / 8,
            sigma_b=self.sigma_b if self.sigma_b is not None else width / 16,
            beta=self.beta,
            radius=self.blur_radius,
        )

    def scanpath(self):
        return ScanpathConfig(
            n_fixations=self.n_fixations,
            step_size=self.step_size,
            inner_steps=self.inner_steps,
            init=self.init,
            target=self.target,
            seed=stream_seed(self.seed, "scanpath_init"),
        )

    def sigma_attr(self, width=None):
        return self.sigma_eps if self.sigma_eps is not None else self.foveation(width).sigma_f

    def training(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            label_smoothing=self.label_smoothing,
            seed=self.seed,
        )

    def snapshot(self):
        """Plain dict of every key, ``auto`` values left unresolved."""
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_OPTIONAL = {"sigma_f", "sigma_b", "blur_radius", "step_size", "sigma_eps"}


def _convert(field, raw):
    if field.name in _OPTIONAL and raw.lower() == "auto":
        return None
    if field.name == "metrics":
        return tuple(m.strip() for m in raw.split(",") if m.strip())
    kind = field.type
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind == "str":
            return raw
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError
        return value
    except ValueError:
        raise ConfigError(field.name, f"cannot parse {raw!r} as {kind}") from None


def parse_config(text):
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ConfigError(key, "unknown key")
        values[key] = _convert(fields[key], raw)
    return RunConfig(**values)


def load_config(path=None):
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def format_config(cfg):
    lines = []
    for key, value in cfg.snapshot().items():
        if value is None:
            value = "auto"
        elif isinstance(value, list):
            value = ",".join(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
