"""Tape-based reverse-mode autodiff over dense numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient slot. Operations
record nodes on the innermost active ``Tape`` (a plain ordered list);
``backward`` seeds the root with 1 and replays the tape in exact reverse
recording order, accumulating gradients into every reachable tensor that
requires them. With no tape active, ops run forward-only, which is how
inference avoids graph bookkeeping.

Only first-order gradients are supported. Elementwise binary ops accept
equal shapes or a scalar on either side; anything fancier is a dedicated
op (conv2d, pooling, bilinear upsampling, grouped softmax, ...).

Precision is per-tensor: float32 for training, float64 for gradient
checks. Binary ops require matching dtypes; python numbers are coerced.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ShapeError

DEFAULT_DTYPE = np.float32
SIGMOID_EPS = 1e-7  # keeps log(sigmoid) finite at float32 and float64


class Tensor:
    """Dense array with an optional same-shape gradient."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.values = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    # operator sugar; all routed through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


class _Node:
    __slots__ = ("inputs", "outputs", "backward_fn")

    def __init__(self, inputs, outputs, backward_fn):
        self.inputs = inputs
        self.outputs = outputs
        self.backward_fn = backward_fn


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed ops; a context manager makes it active."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must unwind in LIFO order"

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, node: _Node) -> None:
        self._nodes.append(node)
        for out in node.outputs:
            self._produced.add(id(out))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._produced


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _register(inputs: Sequence[Tensor], outputs: Sequence[Tensor],
              backward_fn: Callable) -> None:
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
    tape._record(_Node(tuple(inputs), tuple(outputs), backward_fn))


def backward(root: Tensor) -> None:
    """Populate grads of everything reachable from a scalar tape output.

    Repeated calls accumulate; callers zero grads between steps.
    """
    if root.shape != ():
        raise ValueError(f"backward root must be scalar, got shape {root.shape}")
    tape = active_tape()
    if tape is None:
        raise ValueError("backward() requires an active tape")
    if not tape.produced(root):
        raise ValueError("backward root was not produced on the active tape")
    root.accumulate_grad(np.ones((), dtype=root.dtype))
    for node in reversed(tape._nodes):
        out_grads = [o.grad for o in node.outputs]
        if all(g is None for g in out_grads):
            continue
        in_grads = node.backward_fn(out_grads)
        for t, g in zip(node.inputs, in_grads):
            if g is not None and t.requires_grad:
                t.accumulate_grad(g)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        if x.dtype != like.dtype:
            raise ShapeError(f"dtype mismatch: {x.dtype} vs {like.dtype}")
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _binary_shapes(a: Tensor, b: Tensor) -> None:
    # equal shapes, or a scalar on either side; nothing else broadcasts
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return g.reshape(()) if shape == () and g.shape != () else g


def _sum_if_scalar(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if shape == () and g.shape != ():
        return g.sum()
    return g


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    a = _as_tensor(a, b)
    _binary_shapes(a, b)
    out = Tensor(a.values + b.values)

    def bw(gs):
        g = gs[0]
        return _sum_if_scalar(g, a.shape), _sum_if_scalar(g, b.shape)

    _register((a, b), (out,), bw)
    return out


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    a = _as_tensor(a, b)
    _binary_shapes(a, b)
    out = Tensor(a.values - b.values)

    def bw(gs):
        g = gs[0]
        return _sum_if_scalar(g, a.shape), _sum_if_scalar(-g, b.shape)

    _register((a, b), (out,), bw)
    return out


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    a = _as_tensor(a, b)
    _binary_shapes(a, b)
    av, bv = a.values, b.values
    out = Tensor(av * bv)

    def bw(gs):
        g = gs[0]
        return _sum_if_scalar(g * bv, a.shape), _sum_if_scalar(g * av, b.shape)

    _register((a, b), (out,), bw)
    return out


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _as_tensor(b, a)
    a = _as_tensor(a, b)
    _binary_shapes(a, b)
    av, bv = a.values, b.values
    out = Tensor(av / bv)

    def bw(gs):
        g = gs[0]
        ga = _sum_if_scalar(g / bv, a.shape)
        gb = _sum_if_scalar(-g * av / (bv * bv), b.shape)
        return ga, gb

    _register((a, b), (out,), bw)
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.values)
    _register((a,), (out,), lambda gs: (-gs[0],))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar."""
    c = a.dtype.type(c)
    out = Tensor(a.values * c)
    _register((a,), (out,), lambda gs: (gs[0] * c,))
    return out


def relu(a: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is 0."""
    mask = a.values > 0
    out = Tensor(np.where(mask, a.values, a.dtype.type(0)))
    _register((a,), (out,), lambda gs: (np.where(mask, gs[0], 0),))
    return out


def sigmoid(a: Tensor) -> Tensor:
    """Numerically stable logistic, clamped to [eps, 1-eps]."""
    x = a.values
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    np.clip(s, SIGMOID_EPS, 1.0 - SIGMOID_EPS, out=s)
    out = Tensor(s)
    _register((a,), (out,), lambda gs: (gs[0] * s * (1.0 - s),))
    return out


def log(a: Tensor) -> Tensor:
    av = a.values
    out = Tensor(np.log(av))
    _register((a,), (out,), lambda gs: (gs[0] / av,))
    return out


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements -> scalar tensor."""
    if a.size == 0:
        raise ValueError("cannot reduce an empty tensor")
    out = Tensor(a.values.sum())

    def bw(gs):
        return (np.broadcast_to(gs[0], a.shape),)

    _register((a,), (out,), bw)
    return out


def tmean(a: Tensor) -> Tensor:
    """Mean of all elements -> scalar tensor."""
    if a.size == 0:
        raise ValueError("cannot reduce an empty tensor")
    n = a.dtype.type(a.size)
    out = Tensor(a.values.mean(dtype=a.dtype))

    def bw(gs):
        return (np.broadcast_to(gs[0] / n, a.shape),)

    _register((a,), (out,), bw)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.values.reshape(shape))
    _register((a,), (out,), lambda gs: (gs[0].reshape(a.shape),))
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """2-D cross-correlation of (C_in,H,W) with (C_out,C_in,k,k) plus bias.

    The kernel must be square with odd extent. Dispatches to the active
    kernels backend; gradients are computed only for operands that require
    them, which skips the input gradient for first-layer activations.
    """
    if x.values.ndim != 3:
        raise ShapeError(f"conv2d input must be (C,H,W), got {x.shape}")
    if kernel.values.ndim != 4:
        raise ShapeError(f"conv2d kernel must be (C_out,C_in,k,k), got {kernel.shape}")
    cout, cin, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd extent, got {kh}x{kw}")
    if cin != x.shape[0]:
        raise ShapeError(f"kernel expects {cin} input channels, image has {x.shape[0]}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
    if padding < 0:
        raise ValueError("padding must be >= 0")
    ho = x.shape[1] + 2 * padding - kh + 1
    wo = x.shape[2] + 2 * padding - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty: {ho}x{wo}")

    if padding:
        xp = np.pad(x.values, ((0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.values
    xp = np.ascontiguousarray(xp)
    kv = np.ascontiguousarray(kernel.values)
    out = Tensor(kernels.conv_forward(xp, kv) + bias.values[:, None, None])

    def bw(gs):
        g = np.ascontiguousarray(gs[0])
        gx = gk = gb = None
        if x.requires_grad:
            gfull = kernels.conv_grad_input(g, kv)
            if padding:
                gx = gfull[:, padding:-padding, padding:-padding]
            else:
                gx = gfull
        if kernel.requires_grad:
            gk = kernels.conv_grad_kernel(xp, g)
        if bias.requires_grad:
            gb = g.sum(axis=(1, 2))
        return gx, gk, gb

    _register((x, kernel, bias), (out,), bw)
    return out


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties route the gradient to the first cell."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even extents, got {h}x{w}")
    cells = (x.values.reshape(c, h // 2, 2, w // 2, 2)
             .transpose(0, 1, 3, 2, 4)
             .reshape(c, h // 2, w // 2, 4))
    am = cells.argmax(axis=-1)
    out = Tensor(np.take_along_axis(cells, am[..., None], axis=-1)[..., 0])

    def bw(gs):
        gc = np.zeros_like(cells)
        np.put_along_axis(gc, am[..., None], gs[0][..., None], axis=-1)
        g = (gc.reshape(c, h // 2, w // 2, 2, 2)
             .transpose(0, 1, 3, 2, 4)
             .reshape(c, h, w))
        return (g,)

    _register((x,), (out,), bw)
    return out


def block_sum(x: Tensor, w: int) -> Tensor:
    """Sum over non-overlapping w-by-w blocks of the trailing two axes."""
    if w < 1:
        raise ValueError("block size must be >= 1")
    *lead, h, wd = x.shape
    if h % w or wd % w:
        raise ShapeError(f"extents {h}x{wd} not divisible by block size {w}")
    shaped = x.values.reshape(*lead, h // w, w, wd // w, w)
    out = Tensor(shaped.sum(axis=(-3, -1)))

    def bw(gs):
        g = gs[0][..., :, None, :, None]
        g = np.broadcast_to(g, (*lead, h // w, w, wd // w, w))
        return (g.reshape(x.shape),)

    _register((x,), (out,), bw)
    return out


def _interp_matrix(n_out: int, n_in: int, dtype) -> np.ndarray:
    """Row-stochastic 1-D bilinear interpolation matrix, align-corners-false."""
    rows = np.arange(n_out)
    src = (rows + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.minimum(np.floor(src).astype(np.int64), max(n_in - 2, 0))
    hi = np.minimum(lo + 1, n_in - 1)
    w_hi = src - lo
    m = np.zeros((n_out, n_in), dtype=np.float64)
    np.add.at(m, (rows, lo), 1.0 - w_hi)
    np.add.at(m, (rows, hi), w_hi)
    return m.astype(dtype)


def upsample_bilinear(x: Tensor, target: tuple[int, int]) -> Tensor:
    """Bilinear upsampling (align-corners-false) to (H2, W2).

    Implemented as two small interpolation matrices applied per axis, so
    the backward pass is their exact transpose.
    """
    h2, w2 = target
    if h2 < 1 or w2 < 1:
        raise ValueError(f"target extents must be positive, got {target}")
    squeeze = x.values.ndim == 2
    if x.values.ndim not in (2, 3):
        raise ShapeError(f"upsample input must be (C,H,W) or (H,W), got {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    if h2 < h or w2 < w:
        raise ValueError(f"cannot downsample: {h}x{w} -> {h2}x{w2}")
    my = _interp_matrix(h2, h, x.dtype)
    mx = _interp_matrix(w2, w, x.dtype)

    v = x.values[None] if squeeze else x.values
    tmp = np.tensordot(my, v, axes=(1, 1))          # (H2, C, W)
    res = np.tensordot(tmp, mx, axes=(2, 1))        # (H2, C, W2)
    res = res.transpose(1, 0, 2)
    out = Tensor(res[0] if squeeze else res)

    def bw(gs):
        g = gs[0][None] if squeeze else gs[0]
        t = np.tensordot(my.T, g, axes=(1, 1))      # (H, C, W2)
        gx = np.tensordot(t, mx, axes=(2, 0)).transpose(1, 0, 2)
        return (gx[0] if squeeze else gx,)

    _register((x,), (out,), bw)
    return out


def softmax_group(maps: Sequence[Tensor]) -> list[Tensor]:
    """Per-pixel softmax across a group of same-shape maps.

    Uses max-subtraction for stability; at every pixel the outputs sum
    to 1 up to rounding.
    """
    maps = list(maps)
    if not maps:
        raise ValueError("softmax_group needs at least one map")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ShapeError(f"softmax_group shapes differ: {m.shape} vs {shape}")
    stacked = np.stack([m.values for m in maps])
    stacked = stacked - stacked.max(axis=0, keepdims=True)
    e = np.exp(stacked)
    s = e / e.sum(axis=0, keepdims=True)
    outs = [Tensor(s[i].copy()) for i in range(len(maps))]

    def bw(gs):
        g = np.stack([gi if gi is not None else np.zeros(shape, s.dtype)
                      for gi in gs])
        inner = (g * s).sum(axis=0, keepdims=True)
        gx = s * (g - inner)
        return tuple(gx[i] for i in range(len(maps)))

    _register(tuple(maps), tuple(outs), bw)
    return outs


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate (C_i,H,W) tensors along the channel axis."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat_channels needs at least one tensor")
    hw = parts[0].shape[1:]
    for p in parts[1:]:
        if p.shape[1:] != hw:
            raise ShapeError(f"spatial extents differ: {p.shape[1:]} vs {hw}")
    out = Tensor(np.concatenate([p.values for p in parts], axis=0))
    sizes = [p.shape[0] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(gs):
        return tuple(np.split(gs[0], splits, axis=0))

    _register(tuple(parts), (out,), bw)
    return out


def expand_channels(m: Tensor, c: int) -> Tensor:
    """Broadcast an (H,W) map to (C,H,W); the gradient sums over channels."""
    if m.values.ndim != 2:
        raise ShapeError(f"expand_channels expects (H,W), got {m.shape}")
    out = Tensor(np.broadcast_to(m.values, (c, *m.shape)).copy())
    _register((m,), (out,), lambda gs: (gs[0].sum(axis=0),))
    return out


def pick_flat(x: Tensor, indices) -> Tensor:
    """Gather values at row-major flat indices into a 1-D tensor."""
    idx = np.asarray(indices, dtype=np.int64)
    flat = x.values.reshape(-1)
    out = Tensor(flat[idx].copy())

    def bw(gs):
        g = np.zeros_like(flat)
        np.add.at(g, idx, gs[0])
        return (g.reshape(x.shape),)

    _register((x,), (out,), bw)
    return out


def slice1d(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor."""
    if x.values.ndim != 1:
        raise ShapeError(f"slice1d expects a 1-D tensor, got {x.shape}")
    out = Tensor(x.values[start:stop].copy())

    def bw(gs):
        g = np.zeros_like(x.values)
        g[start:stop] = gs[0]
        return (g,)

    _register((x,), (out,), bw)
    return out


def elementwise(kind: str, *operands) -> Tensor:
    """Uniform entry point for the basic pointwise ops."""
    table = {"add": add, "mul": mul, "relu": relu, "sigmoid": sigmoid,
             "scale": scale}
    if kind not in table:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return table[kind](*operands)


def pool(x: Tensor, kind: str, w: int | None = None) -> Tensor:
    """Pooling entry point: kind is "max2x2" or "block_sum" (with w)."""
    if kind == "max2x2":
        return maxpool2(x)
    if kind == "block_sum":
        if w is None:
            raise ValueError("block_sum pooling needs a block size")
        return block_sum(x, w)
    raise ValueError(f"unknown pool kind {kind!r}")


def reduce(x: Tensor, kind: str) -> Tensor:
    """Reduction entry point: kind is "sum" or "mean"."""
    if kind == "sum":
        return tsum(x)
    if kind == "mean":
        return tmean(x)
    raise ValueError(f"unknown reduce kind {kind!r}")


def parameter(values, dtype=DEFAULT_DTYPE) -> Tensor:
    """Trainable tensor (requires_grad=True)."""
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=True)


def constant(values, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.asarray(values, dtype=dtype))
