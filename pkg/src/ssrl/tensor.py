"""Reverse-mode automatic differentiation over dense 4-D tensors.

Every value is a ``(batch, channel, height, width)`` array; scalars are
``(1, 1, 1, 1)``. Operations record a backward closure on their output while
gradient mode is enabled, and :func:`backward` replays the recorded graph in
reverse topological order, visiting each operation exactly once.

The op set is deliberately small: exactly what the segmentation model and the
loss functions need (3x3/1x1 convolution, ReLU, channel softmax, 2x2 max-pool,
nearest 2x upsample, channel/batch concat, batch split, and a few elementwise
reductions).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (used for evaluation)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A 4-D array with an optional gradient buffer.

    ``track_grad`` marks tensors whose gradient should be materialized by
    :func:`backward`; gradients accumulate across backward calls until
    :meth:`zero_grad`.
    """

    __slots__ = ("data", "grad", "track_grad", "name", "_parents", "_backward")

    def __init__(self, data, track_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are 4-D (B, C, H, W); got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.track_grad = track_grad
        self.name = name
        self._parents: tuple = ()
        self._backward = None

    @classmethod
    def scalar(cls, value: float, dtype=np.float64) -> "Tensor":
        return cls(np.full((1, 1, 1, 1), value, dtype=dtype))

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{tag})"


def _record(data: np.ndarray, parents, backward_fn, name=None) -> Tensor:
    out = Tensor(data, name=name)
    if _grad_enabled and any(p.track_grad for p in parents):
        out.track_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _topo_order(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
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
            stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of every tracked tensor reachable from ``loss``."""
    if loss.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.track_grad:
            node.grad = grad if node.grad is None else node.grad + grad
        if node._backward is None:
            continue
        for parent, piece in node._backward(grad):
            if not parent.track_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + piece
            else:
                pending[key] = piece


def _check_same_dtype(*tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"mixed tensor dtypes: {sorted(d.name for d in dtypes)}")


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Stride-1, same-padding convolution with a square 1x1 or 3x3 kernel.

    ``w`` is (outC, inC, k, k), ``b`` is (1, outC, 1, 1).
    """
    _check_same_dtype(x, w, b)
    O, C, kh, kw = w.shape
    if kh != kw or kh not in (1, 3):
        raise ShapeError(f"kernel must be square 1x1 or 3x3, got {kh}x{kw}")
    if x.shape[1] != C:
        raise ShapeError(f"input has {x.shape[1]} channels, weight expects {C}")
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError("spatial extents must be >= 1")
    if b.shape != (1, O, 1, 1):
        raise ShapeError(f"bias shape must be (1, {O}, 1, 1), got {b.shape}")

    y = kernels.conv2d_forward(x.data, w.data, b.data.reshape(O))

    def grad_fn(g):
        gx, gw, gb = kernels.conv2d_backward(x.data, w.data, g)
        return ((x, gx), (w, gw), (b, gb.reshape(1, O, 1, 1)))

    return _record(y, (x, w, b), grad_fn)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)

    def grad_fn(g):
        return ((x, g * (x.data > 0)),)

    return _record(y, (x,), grad_fn)


def softmax_channels(logits: Tensor) -> Tensor:
    """Per-pixel softmax over the channel axis, max-shifted for stability."""
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        inner = (p * g).sum(axis=1, keepdims=True)
        return ((logits, p * (g - inner)),)

    return _record(p, (logits,), grad_fn)


def downsample2(x: Tensor) -> Tensor:
    """2x2 max-pool; the gradient routes to the first maximum in row-major order."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"downsample2 needs even spatial extents, got {H}x{W}")
    y, idx = kernels.maxpool2_forward(x.data)

    def grad_fn(g):
        return ((x, kernels.maxpool2_backward(idx, g)),)

    return _record(y, (x,), grad_fn)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsample; the gradient sums the four contributions."""
    y = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def grad_fn(g):
        B, C, H, W = g.shape
        return ((x, g.reshape(B, C, H // 2, 2, W // 2, 2).sum(axis=(3, 5))),)

    return _record(y, (x,), grad_fn)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(
            f"concat_channels needs matching batch/spatial extents: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    y = np.concatenate([a.data, b.data], axis=1)

    def grad_fn(g):
        return ((a, g[:, :ca]), (b, g[:, ca:]))

    return _record(y, (a, b), grad_fn)


def concat_batch(parts) -> Tensor:
    parts = tuple(parts)
    _check_same_dtype(*parts)
    head = parts[0].shape[1:]
    if any(p.shape[1:] != head for p in parts):
        raise ShapeError("concat_batch needs matching channel/spatial extents")
    y = np.concatenate([p.data for p in parts], axis=0)
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def grad_fn(g):
        return tuple((p, g[bounds[i]:bounds[i + 1]]) for i, p in enumerate(parts))

    return _record(y, parts, grad_fn)


def split_batch(x: Tensor, sizes) -> tuple:
    """Split along the batch axis; each piece scatters its gradient back."""
    if sum(sizes) != x.shape[0]:
        raise ShapeError(f"split sizes {sizes} do not cover batch extent {x.shape[0]}")
    pieces = []
    lo = 0
    for size in sizes:
        lo_i, hi_i = lo, lo + size

        def grad_fn(g, lo_i=lo_i, hi_i=hi_i):
            full = np.zeros_like(x.data)
            full[lo_i:hi_i] = g
            return ((x, full),)

        pieces.append(_record(x.data[lo_i:hi_i].copy(), (x,), grad_fn))
        lo += size
    return tuple(pieces)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes: {a.shape} vs {b.shape}")

    def grad_fn(g):
        return ((a, g), (b, g))

    return _record(a.data + b.data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul needs equal shapes: {a.shape} vs {b.shape}")

    def grad_fn(g):
        return ((a, g * b.data), (b, g * a.data))

    return _record(a.data * b.data, (a, b), grad_fn)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def grad_fn(g):
        return ((x, g * c),)

    return _record(x.data * c, (x,), grad_fn)


def sum_all(x: Tensor) -> Tensor:
    y = np.full((1, 1, 1, 1), x.data.sum(), dtype=x.dtype)

    def grad_fn(g):
        return ((x, np.full_like(x.data, g.reshape(-1)[0])),)

    return _record(y, (x,), grad_fn)


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.size)
