import numpy as np
import pytest

from fovex.predictor import TrainConfig, generate_synthetic, train_toy


def numeric_grad(fn, arr, eps=1e-5):
    """Central finite differences of scalar ``fn()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = fn()
        flat[i] = old - eps
        down = fn()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


@pytest.fixture(scope="session")
def small_data():
    return generate_synthetic(100, 600, size=32), generate_synthetic(101, 200, size=32)


@pytest.fixture(scope="session")
def small_predictor(small_data):
    """32x32 toy predictor, trained for a few seconds."""
    train, _ = small_data
    return train_toy(TrainConfig(epochs=4, label_smoothing=0.1, seed=3), train).predictor


class LinearPredictor:
    """Hand-built ``logits = W @ flatten(x) + b``; enough for the metric code."""

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)

    def forward(self, x):
        from fovex.autodiff import Tensor
        data = x.data
        flat = data.reshape(len(data), -1) if data.ndim == 4 else data.reshape(1, -1)
        out = flat @ self.weight.T + self.bias
        return Tensor(out if data.ndim == 4 else out[0])

    def scores(self, image):
        z = self.weight @ np.asarray(image, dtype=np.float64).ravel() + self.bias
        e = np.exp(z - z.max())
        return e / e.sum()


ACCEPTANCE = []


def record_criterion(number, title, ok, detail=""):
    ACCEPTANCE.append((number, title, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
