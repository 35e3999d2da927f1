"""The black-box classifier: a small CNN, its training loop, weight files and toy data.

Weight file layout (all little-endian)::

    magic      4 bytes   b"FVXW"
    version    u32       1
    classes    u32
    input      3 x u32   channels, height, width
    n_layers   u32
    layers     n_layers descriptors, each a u8 kind followed by u32 fields
                 conv    (kind 1): out, in, kh, kw, stride, padding
                 relu    (kind 2): none
                 maxpool (kind 3): window
                 flatten (kind 4): none
                 dense   (kind 5): out, in
    payload    f64 values of every parameter, layer order, weight before bias
    checksum   u32       CRC-32 of everything above
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArchitectureMismatch, FormatError, NumericalError, ShapeError
from .seeds import stream_seed

MAGIC = b"FVXW"
VERSION = 1

_KIND = {"conv": 1, "relu": 2, "maxpool": 3, "flatten": 4, "dense": 5}
_KIND_NAME = {v: k for k, v in _KIND.items()}
_FIELDS = {
    "conv": ("out", "in", "kh", "kw", "stride", "padding"),
    "relu": (),
    "maxpool": ("window",),
    "flatten": (),
    "dense": ("out", "in"),
}


@dataclass
class Layer:
    kind: str
    spec: dict = field(default_factory=dict)
    params: tuple = ()

    def param_shapes(self):
        s = self.spec
        if self.kind == "conv":
            return [(s["out"], s["in"], s["kh"], s["kw"]), (s["out"],)]
        if self.kind == "dense":
            return [(s["out"], s["in"]), (s["out"],)]
        return []


class Predictor:
    """Sequential network ``conv/relu/maxpool/flatten/dense`` producing logits."""

    def __init__(self, layers, input_shape, n_classes):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.n_classes = int(n_classes)
        self._check_architecture()

    def _check_architecture(self):
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = _layer_output_shape(layer, shape, i)
            for p, expected in zip(layer.params, layer.param_shapes()):
                if p.shape != expected:
                    raise ArchitectureMismatch(f"layer {i} ({layer.kind}): parameter shape {p.shape}, expected {expected}")
        if shape != (self.n_classes,):
            raise ArchitectureMismatch(f"network output shape {shape} does not match {self.n_classes} classes")

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def forward(self, x):
        """Logits for ``x`` of shape ``[C, H, W]`` (or a batch ``[N, C, H, W]``)."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.shape[-3:] != self.input_shape or x.ndim not in (3, 4):
            raise ShapeError(f"predictor expects input {self.input_shape}, got {x.shape}")
        h = x
        for layer in self.layers:
            if layer.kind == "conv":
                h = ad.conv2d(h, layer.params[0], layer.params[1], layer.spec["stride"], layer.spec["padding"])
            elif layer.kind == "relu":
                h = ad.relu(h)
            elif layer.kind == "maxpool":
                h = ad.maxpool2d(h, layer.spec["window"])
            elif layer.kind == "flatten":
                h = ad.flatten(h)
            elif layer.kind == "dense":
                h = ad.dense(h, layer.params[0], layer.params[1])
        return h

    __call__ = forward

    def probabilities(self, x):
        """Softmax scores as a plain array; no graph is built."""
        return ad.softmax(self.forward(_constant(x)).data)

    def predict(self, x):
        """Arg-max class (an int, or an array for a batch)."""
        logits = self.forward(_constant(x)).data
        return int(np.argmax(logits)) if logits.ndim == 1 else np.argmax(logits, axis=1)

    def with_grad(self):
        """Copy whose parameters are fresh leaves that require gradients."""
        return self._copy(requires_grad=True)

    def frozen(self):
        """Copy whose parameters are constants."""
        return self._copy(requires_grad=False)

    def _copy(self, requires_grad):
        layers = [
            Layer(l.kind, dict(l.spec), tuple(Tensor(p.data, requires_grad=requires_grad) for p in l.params))
            for l in self.layers
        ]
        return Predictor(layers, self.input_shape, self.n_classes)


def _raw(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _constant(x):
    return Tensor(_raw(x))


def _layer_output_shape(layer, shape, index):
    s = layer.spec
    if layer.kind == "conv":
        if len(shape) != 3 or shape[0] != s["in"]:
            raise ArchitectureMismatch(f"layer {index} conv expects {s['in']} channels, receives {shape}")
        h = (shape[1] + 2 * s["padding"] - s["kh"]) // s["stride"] + 1
        w = (shape[2] + 2 * s["padding"] - s["kw"]) // s["stride"] + 1
        return (s["out"], h, w)
    if layer.kind == "relu":
        return shape
    if layer.kind == "maxpool":
        return (shape[0], shape[1] // s["window"], shape[2] // s["window"])
    if layer.kind == "flatten":
        return (int(np.prod(shape)),)
    if layer.kind == "dense":
        if shape != (s["in"],):
            raise ArchitectureMismatch(f"layer {index} dense expects {s['in']} inputs, receives {shape}")
        return (s["out"],)
    raise ArchitectureMismatch(f"layer {index}: unknown kind {layer.kind!r}")


def build_toy(input_shape=(3, 64, 64), n_classes=2, seed=0, zero_head=False):
    """conv(8,3x3) -> relu -> pool2 -> conv(16,3x3) -> relu -> pool2 -> flatten -> dense.

    Convolutions use padding 1 so only pooling shrinks the image.  Weights are
    He-normal, biases zero.
    """
    c, h, w = input_shape
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        return Tensor(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape))

    flat = 16 * (h // 4) * (w // 4)
    layers = [
        Layer("conv", dict(out=8, **{"in": c}, kh=3, kw=3, stride=1, padding=1),
              (he((8, c, 3, 3), 9 * c), Tensor(np.zeros(8)))),
        Layer("relu"),
        Layer("maxpool", {"window": 2}),
        Layer("conv", dict(out=16, **{"in": 8}, kh=3, kw=3, stride=1, padding=1),
              (he((16, 8, 3, 3), 72), Tensor(np.zeros(16)))),
        Layer("relu"),
        Layer("maxpool", {"window": 2}),
        Layer("flatten"),
        Layer("dense", dict(out=n_classes, **{"in": flat}),
              (Tensor(np.zeros((n_classes, flat))) if zero_head else he((n_classes, flat), flat),
               Tensor(np.zeros(n_classes)))),
    ]
    return Predictor(layers, input_shape, n_classes)


# -- training -------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 8
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    label_smoothing: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ValueError("learning_rate must be >= 0 and momentum in [0, 1)")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")


@dataclass
class TrainResult:
    predictor: Predictor
    loss_trace: list


def train_toy(cfg, data, predictor=None, log=None):
    """Minibatch SGD with momentum on mean cross-entropy.

    ``data`` is a :class:`SyntheticDataset` (or anything with ``images`` and
    ``labels`` arrays).  Returns the trained (frozen) predictor and the mean
    training loss of every epoch.
    """
    images, labels = np.asarray(data.images), np.asarray(data.labels)
    if len(images) == 0:
        raise ValueError("cannot train on an empty dataset")
    if predictor is None:
        predictor = build_toy(images.shape[1:], data.n_classes, seed=stream_seed(cfg.seed, "weight_init"))
    model = predictor.with_grad()
    params = model.parameters()
    velocity = [np.zeros_like(p.data) for p in params]
    rng = np.random.default_rng(stream_seed(cfg.seed, "shuffle"))
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(images))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            ad.zero_grad(*params)
            loss = ad.softmax_cross_entropy(
                model.forward(Tensor(images[idx])), labels[idx], cfg.label_smoothing)
            if not np.isfinite(loss.data):
                raise NumericalError(f"training diverged at epoch {epoch}, batch starting at {start}: loss {loss.item()}")
            loss.backward()
            for p, v in zip(params, velocity):
                v *= cfg.momentum
                v += p.grad
                p.data -= cfg.learning_rate * v
            total += loss.item() * len(idx)
        trace.append(total / len(images))
        if log is not None:
            log(epoch, trace[-1])
    return TrainResult(model.frozen(), trace)


def accuracy(predictor, images, labels, batch_size=256):
    images, labels = np.asarray(images), np.asarray(labels)
    hits = 0
    for start in range(0, len(images), batch_size):
        logits = predictor.forward(Tensor(images[start:start + batch_size])).data
        hits += int(np.sum(np.argmax(logits, axis=1) == labels[start:start + batch_size]))
    return hits / len(images)


# -- weight files ---------------------------------------------------------------


def save_weights(p, path):
    with open(path, "wb") as fh:
        fh.write(weights_to_bytes(p))


def weights_to_bytes(p):
    head = bytearray(MAGIC)
    head += struct.pack("<5I", VERSION, p.n_classes, *p.input_shape)
    head += struct.pack("<I", len(p.layers))
    for layer in p.layers:
        head += struct.pack("<B", _KIND[layer.kind])
        head += struct.pack(f"<{len(_FIELDS[layer.kind])}I", *(layer.spec[k] for k in _FIELDS[layer.kind]))
    for param in p.parameters():
        head += np.ascontiguousarray(param.data, dtype="<f8").tobytes()
    head += struct.pack("<I", zlib.crc32(bytes(head)))
    return bytes(head)


def load_weights(path, n_classes=None):
    with open(path, "rb") as fh:
        blob = fh.read()
    return weights_from_bytes(blob, n_classes)


def weights_from_bytes(blob, n_classes=None):
    """Parse a weight file.  ``n_classes`` optionally pins the expected head size."""
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise FormatError(f"weight file truncated: need {size} bytes, {len(blob) - pos} left", pos)
        values = struct.unpack_from(fmt, blob, pos)
        pos += size
        return values

    if blob[:4] != MAGIC:
        raise FormatError("not a weight file (bad magic)", 0)
    pos = 4
    version, classes, c, h, w = take("<5I")
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}", 4)
    if n_classes is not None and classes != n_classes:
        raise ArchitectureMismatch(f"weight file is for {classes} classes, expected {n_classes}")
    (n_layers,) = take("<I")
    layers = []
    for _ in range(n_layers):
        at = pos
        (kind,) = take("<B")
        if kind not in _KIND_NAME:
            raise FormatError(f"unknown layer kind {kind}", at)
        name = _KIND_NAME[kind]
        values = take(f"<{len(_FIELDS[name])}I")
        layers.append(Layer(name, dict(zip(_FIELDS[name], values))))
    for layer in layers:
        params = []
        for shape in layer.param_shapes():
            count = int(np.prod(shape))
            if pos + 8 * count > len(blob) - 4:
                raise FormatError("weight file truncated inside parameter payload", pos)
            params.append(Tensor(np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)))
            pos += 8 * count
        layer.params = tuple(params)
    if pos + 4 != len(blob):
        raise FormatError(f"weight file has {len(blob) - pos - 4} unexpected trailing bytes", pos)
    (crc,) = struct.unpack_from("<I", blob, pos)
    if crc != zlib.crc32(blob[:pos]):
        raise FormatError("weight file checksum mismatch", pos)
    return Predictor(layers, (c, h, w), classes)


# -- synthetic data -------------------------------------------------------------


@dataclass
class SyntheticDataset:
    """Blob-in-a-quadrant images.

    ``boxes`` rows are ``(top, left, height, width)``; ``centers`` rows are the
    blob centre ``(row, col)``.
    """

    seed: int
    size: int
    n_classes: int
    images: np.ndarray
    labels: np.ndarray
    boxes: np.ndarray
    centers: np.ndarray
    sigmas: np.ndarray

    def __len__(self):
        return len(self.labels)


def generate_synthetic(seed, n, size=64, n_classes=2, channels=3):
    """Procedural dataset; a pure function of its arguments.

    Each image is smooth random texture in ``[0, 0.45]`` plus one bright
    Gaussian blob placed in a uniformly chosen quadrant (0 top-left, 1
    top-right, 2 bottom-left, 3 bottom-right).  The label is
    ``quadrant % n_classes``, so two classes mean left versus right half.
    The box tightly encloses the blob's 2-sigma disc.  Sample ``i`` depends
    only on ``(seed, i, size, n_classes, channels)``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if n_classes not in (2, 4):
        raise ValueError("n_classes must be 2 or 4")
    images = np.empty((n, channels, size, size))
    labels = np.empty(n, dtype=np.int64)
    boxes = np.empty((n, 4), dtype=np.int64)
    centers = np.empty((n, 2))
    sigmas = np.empty(n)
    rows = np.arange(size)[:, None]
    cols = np.arange(size)[None, :]
    half = size / 2
    for i in range(n):
        rng = np.random.default_rng((seed, i))
        quadrant = int(rng.integers(4))
        sigma = rng.uniform(size / 20, size / 12)
        margin = 2 * sigma
        r = rng.uniform(margin, half - margin) + half * (quadrant // 2)
        c = rng.uniform(margin, half - margin) + half * (quadrant % 2)
        noise = rng.uniform(size=(channels, size // 8 + 1, size // 8 + 1))
        texture = np.kron(noise, np.ones((8, 8)))[:, :size, :size]
        texture = 0.45 * (0.5 * texture + 0.5 * rng.uniform(size=(channels, size, size)))
        tint = rng.uniform(0.8, 1.0, size=channels)
        blob = np.exp(-((rows - r) ** 2 + (cols - c) ** 2) / (2 * sigma ** 2))
        images[i] = np.clip(texture * (1 - blob) + tint[:, None, None] * blob, 0.0, 1.0)
        labels[i] = quadrant % n_classes
        top, left = max(0, math.floor(r - 2 * sigma)), max(0, math.floor(c - 2 * sigma))
        bottom, right = min(size - 1, math.ceil(r + 2 * sigma)), min(size - 1, math.ceil(c + 2 * sigma))
        boxes[i] = (top, left, bottom - top + 1, right - left + 1)
        centers[i] = (r, c)
        sigmas[i] = sigma
    return SyntheticDataset(seed, size, n_classes, images, labels, boxes, centers, sigmas)
