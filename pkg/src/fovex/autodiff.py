"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation returns a new :class:`Tensor`.  When at least one input
requires a gradient, the output remembers its inputs together with a
closure mapping the upstream gradient to one gradient per input.
:meth:`Tensor.backward` walks that graph once in reverse topological order.

Broadcasting is deliberately limited to scalar-with-tensor; the only other
shape-changing helper is :func:`expand`, which repeats a tensor along new
leading axes (used to apply an ``H x W`` mask to every channel).
"""

from __future__ import annotations

from numbers import Real

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

__all__ = [
    "Tensor",
    "add",
    "clamp",
    "conv2d",
    "dense",
    "elementwise",
    "exp",
    "expand",
    "flatten",
    "maxpool2d",
    "mul",
    "relu",
    "scale",
    "softmax",
    "softmax_cross_entropy",
    "sub",
    "zero_grad",
]


class Tensor:
    """A dense float64 array that may take part in a differentiation graph.

    Leaves are created directly by the user; non-leaf tensors are produced by
    operations.  ``grad`` is ``None`` until a backward pass reaches the tensor.
    """

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.data = np.array(data, dtype=np.float64, copy=True) if op == "leaf" else data
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._parents = tuple(_parents)
        self._backward = _backward

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_op(cls, data, parents, backward, op):
        """Wrap ``data`` as the output of an operation over ``parents``.

        ``backward(g)`` must return one array (or ``None``) per parent, each
        with that parent's shape.  No graph is recorded when no parent
        requires a gradient.
        """
        data = np.asarray(data, dtype=np.float64)
        if any(p.requires_grad for p in parents):
            return cls(data, True, parents, backward, op)
        return cls(data, False, (), None, op)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        """Same values, cut from the graph."""
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    # -- differentiation ------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf.

        Leaf gradients accumulate across calls; call :func:`zero_grad` to reset.
        Intermediate tensors that require a gradient receive the gradient of
        the most recent pass.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.is_leaf and node.grad is not None:
                    node.grad = node.grad + g
                else:
                    node.grad = g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def sum(self):
        shape = self.shape
        return Tensor.from_op(
            self.data.sum(), (self,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum"
        )

    def mean(self):
        n = self.data.size
        shape = self.shape
        return Tensor.from_op(
            self.data.mean(), (self,), lambda g: (np.full(shape, g / n),), "mean"
        )

    def reshape(self, *shape):
        old = self.shape
        return Tensor.from_op(
            self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),), "reshape"
        )


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def zero_grad(*tensors):
    """Clear accumulated gradients."""
    for t in tensors:
        t.grad = None


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(x):
    return isinstance(x, Real) or (isinstance(x, Tensor) and x.ndim == 0)


def _unbroadcast(g, shape):
    return g if g.shape == shape else np.asarray(g.sum()).reshape(shape)


def _check_binary(a, b, name):
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise ----------------------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "add")
    return Tensor.from_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "sub")
    return Tensor.from_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "mul")
    return Tensor.from_op(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def scale(a, c):
    """Multiply by a constant Python scalar."""
    c = float(c)
    return Tensor.from_op(a.data * c, (a,), lambda g: (g * c,), "scale")


def clamp(a, lo, hi):
    """Clip to ``[lo, hi]``; the gradient passes only where ``lo < a < hi``."""
    inside = (a.data > lo) & (a.data < hi)
    return Tensor.from_op(
        np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clamp"
    )


def elementwise(op, a, b):
    """Dispatch by name: ``add``, ``sub``, ``mul``, ``scale`` or ``clamp``.

    For ``scale`` ``b`` is a scalar; for ``clamp`` it is a ``(lo, hi)`` pair.
    """
    if op == "add":
        return add(a, b)
    if op == "sub":
        return sub(a, b)
    if op == "mul":
        return mul(a, b)
    if op == "scale":
        if not _is_scalar(b):
            raise ShapeError(f"scale: factor must be a scalar, got shape {np.shape(b)}")
        return scale(a, float(_as_tensor(b).data))
    if op == "clamp":
        lo, hi = b
        return clamp(a, lo, hi)
    raise ValueError(f"unknown elementwise op {op!r}")


def exp(a):
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,), "exp")


def relu(a):
    mask = a.data > 0
    return Tensor.from_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def expand(a, shape):
    """Repeat ``a`` along new leading axes so that it has ``shape``."""
    shape = tuple(shape)
    if shape[len(shape) - a.ndim:] != a.shape:
        raise ShapeError(f"expand: cannot expand {a.shape} to {shape}")
    lead = tuple(range(len(shape) - a.ndim))
    return Tensor.from_op(
        np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (g.sum(axis=lead),), "expand"
    )


# -- layers ---------------------------------------------------------------------


def conv2d(x, kernel, bias=None, stride=1, padding=0):
    """2D cross-correlation with zero padding.

    ``x`` is ``[C, H, W]`` or a batch ``[N, C, H, W]``; ``kernel`` is
    ``[K, C, kh, kw]``; optional ``bias`` is ``[K]``.
    """
    batched = x.ndim == 4
    if x.ndim not in (3, 4) or kernel.ndim != 4:
        raise ShapeError(f"conv2d: bad ranks, input {x.shape}, kernel {kernel.shape}")
    xb = x.data if batched else x.data[None]
    n, c, h, w = xb.shape
    k, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {kc} ({x.shape} vs {kernel.shape})")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    if bias is not None and bias.shape != (k,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {k} filters")

    p, s = padding, stride
    xp = np.pad(xb, ((0, 0), (0, 0), (p, p), (p, p))) if p else xb
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    ho, wo = win.shape[2], win.shape[3]
    out = np.tensordot(win, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        gb = g if batched else g[None]
        gx = gk = gbias = None
        if x.requires_grad:
            gwin = np.tensordot(gb, kernel.data, axes=([1], [0]))  # N,Ho,Wo,C,kh,kw
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += gwin[..., i, j].transpose(0, 3, 1, 2)
            gxp = gxp[:, :, p:p + h, p:p + w]
            gx = gxp if batched else gxp[0]
        if kernel.requires_grad:
            gk = np.tensordot(gb, win, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            gbias = gb.sum(axis=(0, 2, 3))
        return (gx, gk, gbias) if bias is not None else (gx, gk)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return Tensor.from_op(out if batched else out[0], parents, backward, "conv2d")


def dense(x, weight, bias):
    """Affine map ``weight @ x + bias`` for ``x`` of shape ``[n]`` or ``[N, n]``."""
    if weight.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense: bias {bias.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        gx = g @ weight.data
        gw = np.outer(g, x.data) if x.ndim == 1 else g.T @ x.data
        gbias = g if x.ndim == 1 else g.sum(axis=0)
        return gx, gw, gbias

    return Tensor.from_op(out, (x, weight, bias), backward, "dense")


def maxpool2d(x, window):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.

    The gradient goes to the first maximal element of each window in
    row-major order.
    """
    batched = x.ndim == 4
    if x.ndim not in (3, 4):
        raise ShapeError(f"maxpool2d: expected [C,H,W] or [N,C,H,W], got {x.shape}")
    xb = x.data if batched else x.data[None]
    n, c, h, w = xb.shape
    if window > h or window > w:
        raise ShapeError(f"maxpool2d: window {window} larger than input {h}x{w}")
    ho, wo = h // window, w // window
    crop = xb[:, :, :ho * window, :wo * window]
    blocks = crop.reshape(n, c, ho, window, wo, window).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, ho, wo, window * window)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = g if batched else g[None]
        gblocks = np.zeros((n, c, ho, wo, window * window))
        np.put_along_axis(gblocks, arg[..., None], gb[..., None], axis=-1)
        gblocks = gblocks.reshape(n, c, ho, wo, window, window).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros_like(xb)
        gx[:, :, :ho * window, :wo * window] = gblocks.reshape(n, c, ho * window, wo * window)
        return (gx if batched else gx[0],)

    return Tensor.from_op(out if batched else out[0], (x,), backward, "maxpool2d")


def flatten(x):
    """``[C, H, W] -> [C*H*W]``; a leading batch axis of a 4D input is kept."""
    if x.ndim == 4:
        return x.reshape(x.shape[0], -1)
    return x.reshape(-1)


def softmax(logits):
    """Numerically stable softmax of a plain array along its last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, target, smoothing=0.0):
    """Cross-entropy of ``softmax(logits)`` against a class index.

    For a batch ``[N, n]`` of logits, ``target`` is a length-``N`` sequence and
    the mean loss is returned.  ``smoothing`` mixes the one-hot target with the
    uniform distribution.
    """
    z = logits.data
    if z.ndim not in (1, 2):
        raise ShapeError(f"softmax_cross_entropy: logits must be 1D or 2D, got {z.shape}")
    zb = z if z.ndim == 2 else z[None]
    tgt = np.atleast_1d(np.asarray(target))
    if tgt.shape != (zb.shape[0],) or not np.issubdtype(tgt.dtype, np.integer):
        raise ShapeError(f"softmax_cross_entropy: {zb.shape[0]} rows need as many integer targets, got {target!r}")
    if np.any(tgt < 0) or np.any(tgt >= zb.shape[1]):
        raise IndexError(f"target {target!r} out of range for {zb.shape[1]} classes")
    rows = np.arange(zb.shape[0])
    n = zb.shape[1]
    q = np.full(zb.shape, smoothing / n)
    q[rows, tgt] += 1.0 - smoothing
    shifted = zb - zb.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    loss = np.mean(logsum - np.sum(q * shifted, axis=1))

    def backward(g):
        grad = softmax(zb) - q
        grad *= g / zb.shape[0]
        return (grad if z.ndim == 2 else grad[0],)

    return Tensor.from_op(loss, (logits,), backward, "cross_entropy")
