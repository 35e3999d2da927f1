"""Scanpath generation by gradient descent on fixation coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericalError
from .foveation import FoveationState, coarse, render_state, update_state


@dataclass(frozen=True)
class ScanpathConfig:
    """Scanpath parameters.

    ``step_size`` multiplies the loss gradient (pixels per unit gradient,
    i.e. px^2 per unit loss); ``None`` resolves to ``0.75 * width**2``,
    which moves a calibrated classifier's fixations a few pixels per step.
    ``init`` is ``"center"`` or ``"random"`` (drawn from ``seed``);
    ``target`` is ``"predicted"`` or ``"label"``.
    """

    n_fixations: int = 10
    step_size: float | None = None
    inner_steps: int = 1
    init: str = "center"
    target: str = "predicted"
    seed: int = 0

    def __post_init__(self):
        if self.n_fixations < 1:
            raise ValueError(f"n_fixations must be >= 1, got {self.n_fixations}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.inner_steps < 1:
            raise ValueError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if self.init not in ("center", "random"):
            raise ValueError(f"init must be 'center' or 'random', got {self.init!r}")
        if self.target not in ("predicted", "label"):
            raise ValueError(f"target must be 'predicted' or 'label', got {self.target!r}")

    def resolved_step(self, width):
        return self.step_size if self.step_size is not None else 0.75 * width ** 2


@dataclass
class Scanpath:
    """Committed fixations ``(row, col)`` with the loss and target-class score at each."""

    fixations: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    target: int = 0
    base_score: float = float("nan")

    def __len__(self):
        return len(self.fixations)

    def as_array(self):
        return np.asarray(self.fixations, dtype=np.float64).reshape(-1, 2)


def cross_entropy_objective(predictor, target):
    def objective(f, state_image):
        return ad.softmax_cross_entropy(predictor.forward(state_image), target)
    return objective


def fixation_step(b, x, x_bar, state, f, y, step_size, sigma_f, beta, objective=None):
    """One update ``f' = clamp(f - step_size * dL/df)``.

    The loss is evaluated on the state image rendered with a candidate blob
    at ``f`` added to ``state``.  ``objective(f_tensor, state_image)`` replaces
    the default cross-entropy of ``b`` against ``y`` when given.  Returns the
    new location and the loss at ``f``.
    """
    h, w = x.shape[-2:]
    f_t = Tensor(np.asarray(f, dtype=np.float64), requires_grad=True)
    candidate = update_state(state, f_t, sigma_f, beta)
    image = render_state(x, x_bar, candidate)
    if objective is None:
        objective = cross_entropy_objective(b, y)
    loss = objective(f_t, image)
    loss.backward()
    grad = f_t.grad if f_t.grad is not None else np.zeros(2)
    if not (np.all(np.isfinite(grad)) and np.isfinite(loss.data)):
        raise NumericalError(f"non-finite loss or gradient at fixation {tuple(f_t.data)}: loss={loss.item()}, grad={grad}")
    new = f_t.data - step_size * grad
    new = np.array([np.clip(new[0], 0.0, h - 1.0), np.clip(new[1], 0.0, w - 1.0)])
    return new, loss.item()


def initial_fixation(cfg, height, width):
    if cfg.init == "center":
        return np.array([(height - 1) / 2.0, (width - 1) / 2.0])
    rng = np.random.default_rng(cfg.seed)
    return np.array([rng.uniform(0, height - 1), rng.uniform(0, width - 1)])


def generate_scanpath(b, x, cfg, fov, label=None, x_bar=None, objective=None):
    """Explore ``x`` for ``cfg.n_fixations`` fixations.

    Each fixation starts from the previous one (the initial policy for the
    first), takes ``cfg.inner_steps`` gradient steps, and is then committed
    into the foveation state.  The target is the predictor's class on the
    unfoveated image unless ``cfg.target == "label"``.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x_bar is None:
        x_bar = coarse(x, fov.sigma_b, fov.blur_radius)
    if cfg.target == "label":
        if label is None:
            raise ValueError("target policy 'label' needs a label")
        target = int(label)
    else:
        target = b.predict(x)
    h, w = x.shape[-2:]
    step = cfg.resolved_step(w)
    state = FoveationState.initial(h, w)
    f = initial_fixation(cfg, h, w)
    path = Scanpath(target=target, base_score=float(b.probabilities(x_bar)[target]))
    for i in range(cfg.n_fixations):
        loss = None
        for _ in range(cfg.inner_steps):
            try:
                f, loss = fixation_step(b, x, x_bar, state, f, target, step, fov.sigma_f, fov.beta, objective)
            except NumericalError as exc:
                raise NumericalError(f"fixation {i + 1}: {exc}") from exc
        state = update_state(state, f, fov.sigma_f, fov.beta).committed()
        path.fixations.append((float(f[0]), float(f[1])))
        path.losses.append(float(loss))
        path.scores.append(float(b.probabilities(render_state(x, x_bar, state))[target]))
    return path


def write_scanpath(path, scanpath):
    """Write ``t,row,col,loss`` lines with round-trippable floats."""
    with open(path, "w") as fh:
        fh.write(format_scanpath(scanpath))


def format_scanpath(scanpath):
    return "".join(
        f"{t},{r!r},{c!r},{loss!r}\n"
        for t, ((r, c), loss) in enumerate(zip(scanpath.fixations, scanpath.losses), start=1)
    )


def read_scanpath(path):
    sp = Scanpath()
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            _, r, c, loss = line.split(",")
            sp.fixations.append((float(r), float(c)))
            sp.losses.append(float(loss))
    return sp
