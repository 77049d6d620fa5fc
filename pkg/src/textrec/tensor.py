"""Dense float64 tensors with reverse-mode differentiation.

Every value in this package is a `Tensor`: a rank-<=4 numpy float64 array in
row-major (batch, channel, height, width) order, optionally carrying an
autodiff graph node. Operations are pure functions of their inputs; gradients
for a scalar loss are collected through a `GradTape` holding named parameter
leaves. Graphs are rebuilt per step, so concurrent evaluation over different
inputs is safe as long as each tape is owned by a single step.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ShapeError",
    "Tensor",
    "GradTape",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "add_const",
    "hadamard",
    "channel_bias",
    "sigmoid",
    "tanh",
    "relu",
    "log_clamped",
    "conv2d",
    "matmul",
    "dense",
    "reshape",
    "concat_channels",
    "slice_channels",
    "spatial_softmax",
    "softmax_rows",
    "sum_all",
    "mean_all",
    "avg_pool2",
    "upsample2",
]


class ShapeError(ValueError):
    """Operand extents are incompatible for the requested operation."""


class Tensor:
    """Rank-<=4 dense array of 64-bit floats, row-major (N, C, H, W)."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "_conv_cols")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0:
            arr = np.ascontiguousarray(arr)  # 0-d stays 0-d; ascontiguousarray would promote it
        if arr.ndim > 4:
            raise ShapeError(f"rank {arr.ndim} exceeds the supported maximum of 4")
        if arr.size == 0:
            raise ShapeError(f"all extents must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._grad_fn = None
        self._conv_cols: dict | None = None  # im2col cache, shared by convs on this value

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; python scalars are wrapped as constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple, grad_fn) -> Tensor:
    """Build an op output, attaching the graph node only when needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (got, want) in enumerate(zip(g.shape, shape)) if want == 1 and got != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"{op}: extents {a.data.shape} and {b.data.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_check(a, b, "add")
    data = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    return add(a, neg(_wrap(b)))


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_check(a, b, "mul")
    data = a.data * b.data

    def grad_fn(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _make(data, (a, b), grad_fn)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_check(a, b, "div")
    data = a.data / b.data

    def grad_fn(g):
        ga = _unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape) if b.requires_grad else None
        return ga, gb

    return _make(data, (a, b), grad_fn)


def scale(a, factor: float) -> Tensor:
    a = _wrap(a)
    factor = float(factor)
    return _make(a.data * factor, (a,), lambda g: (g * factor,))


def add_const(a, value: float) -> Tensor:
    a = _wrap(a)
    return _make(a.data + float(value), (a,), lambda g: (g,))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; `b` may have a single channel broadcast across `a`'s."""
    a, b = _wrap(a), _wrap(b)
    same = a.data.shape == b.data.shape
    chan_bcast = (
        a.data.ndim == 4
        and b.data.ndim == 4
        and b.data.shape[1] == 1
        and a.data.shape[0] == b.data.shape[0]
        and a.data.shape[2:] == b.data.shape[2:]
    )
    if not (same or chan_bcast):
        raise ShapeError(f"hadamard: extents {a.data.shape} and {b.data.shape} are incompatible")
    return mul(a, b)


def channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias vector to a rank-4 map."""
    x, bias = _wrap(x), _wrap(bias)
    if x.data.ndim != 4 or bias.data.ndim != 1 or bias.data.shape[0] != x.data.shape[1]:
        raise ShapeError(
            f"channel_bias: map has {x.data.shape} but bias has {bias.data.shape}"
        )
    data = x.data + bias.data[None, :, None, None]

    def grad_fn(g):
        return g, g.sum(axis=(0, 2, 3))

    return _make(data, (x, bias), grad_fn)


# ---------------------------------------------------------------------------
# activations

def sigmoid(x) -> Tensor:
    x = _wrap(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x) -> Tensor:
    x = _wrap(x)
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x) -> Tensor:
    x = _wrap(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def log_clamped(x, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); gradient is zero on the clamped region."""
    x = _wrap(x)
    clamped = np.maximum(x.data, floor)
    mask = x.data > floor
    return _make(np.log(clamped), (x,), lambda g: (g * mask / clamped,))


# ---------------------------------------------------------------------------
# convolution and dense maps

def _im2col(padded: np.ndarray, kh: int, kw: int, out_h: int, out_w: int) -> np.ndarray:
    # (N, C, Hp, Wp) -> (N, C*kh*kw, out_h*out_w)
    n, c = padded.shape[:2]
    win = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, out_h * out_w)
    return np.ascontiguousarray(cols)


def _col2im(dcols: np.ndarray, n: int, c: int, h: int, w: int, kh: int, kw: int) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    dpad = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    dcols = dcols.reshape(n, c, kh, kw, h, w)
    for i in range(kh):
        for j in range(kw):
            dpad[:, :, i : i + h, j : j + w] += dcols[:, :, i, j]
    return dpad[:, :, ph : ph + h, pw : pw + w]


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-padded 2-D convolution over (N, Cin, H, W) with an odd kernel.

    out[n, o, y, x] = bias[o] + sum_{c, dy, dx} in[n, c, y+dy-kh//2, x+dx-kw//2]
    * kernel[o, c, dy, dx], reading zeros outside the input bounds.
    """
    x, kernel = _wrap(x), _wrap(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(
            f"conv2d: need rank-4 input and kernel, got {x.data.shape} and {kernel.data.shape}"
        )
    n, cin, h, w = x.data.shape
    cout, kcin, kh, kw = kernel.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if cin != kcin:
        raise ShapeError(f"conv2d: input has {cin} channels but kernel expects {kcin}")
    if bias is not None:
        bias = _wrap(bias)
        if bias.data.shape != (cout,):
            raise ShapeError(f"conv2d: bias has shape {bias.data.shape}, expected ({cout},)")

    ph, pw = kh // 2, kw // 2
    if x._conv_cols is None:
        x._conv_cols = {}
    cols = x._conv_cols.get((kh, kw))
    if cols is None:
        padded = np.zeros((n, cin, h + 2 * ph, w + 2 * pw))
        padded[:, :, ph : ph + h, pw : pw + w] = x.data
        cols = _im2col(padded, kh, kw, h, w)
        x._conv_cols[(kh, kw)] = cols
    w2 = kernel.data.reshape(cout, cin * kh * kw)
    out = np.matmul(w2, cols).reshape(n, cout, h, w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def grad_fn(g):
        g2 = g.reshape(n, cout, h * w)
        gk = (
            np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.data.shape)
            if kernel.requires_grad
            else None
        )
        gx = None
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2)
            gx = _col2im(dcols, n, cin, h, w, kh, kw)
        if bias is None:
            return gx, gk
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gk, gb

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(out, parents, grad_fn)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """(N, D) @ (D, K) product."""
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"matmul: inner extents differ, {x.data.shape} vs {w.data.shape}"
        )
    data = x.data @ w.data

    def grad_fn(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        return gx, gw

    return _make(data, (x, w), grad_fn)


def dense(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """Affine map (N, D) @ (D, K) + bias."""
    x, w, bias = _wrap(x), _wrap(w), _wrap(bias)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"dense: inner extents differ, {x.data.shape} vs {w.data.shape}")
    if bias.data.shape != (w.data.shape[1],):
        raise ShapeError(f"dense: bias has shape {bias.data.shape}, expected ({w.data.shape[1]},)")
    data = x.data @ w.data + bias.data

    def grad_fn(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _make(data, (x, w, bias), grad_fn)


def reshape(x: Tensor, dims: tuple) -> Tensor:
    x = _wrap(x)
    dims = tuple(int(d) for d in dims)
    if int(np.prod(dims)) != x.data.size or len(dims) > 4:
        raise ShapeError(f"reshape: cannot view {x.data.shape} as {dims}")
    shape = x.data.shape
    return _make(x.data.reshape(dims), (x,), lambda g: (g.reshape(shape),))


# ---------------------------------------------------------------------------
# structure ops

def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two (N, C, H, W) maps along the channel axis, `a` first."""
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeError(f"concat_channels: need rank-4 maps, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ShapeError(
            f"concat_channels: batch/spatial extents differ, {a.data.shape} vs {b.data.shape}"
        )
    ca = a.data.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)

    def grad_fn(g):
        return g[:, :ca], g[:, ca:]

    return _make(data, (a, b), grad_fn)


def concat_first_axis(*parts: Tensor) -> Tensor:
    """Concatenate tensors along axis 0 (e.g. stacking conv kernels or biases)."""
    parts = tuple(_wrap(p) for p in parts)
    ranks = {p.data.ndim for p in parts}
    tails = {p.data.shape[1:] for p in parts}
    if len(ranks) != 1 or len(tails) != 1 or parts[0].data.ndim == 0:
        raise ShapeError(
            f"concat_first_axis: incompatible extents {[p.data.shape for p in parts]}"
        )
    data = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.data.shape[0] for p in parts]

    def grad_fn(g):
        outs, lo = [], 0
        for s in sizes:
            outs.append(g[lo : lo + s])
            lo += s
        return tuple(outs)

    return _make(data, parts, grad_fn)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    x = _wrap(x)
    if x.data.ndim != 4 or not (0 <= start < stop <= x.data.shape[1]):
        raise ShapeError(
            f"slice_channels: [{start}:{stop}] invalid for shape {x.data.shape}"
        )
    data = np.ascontiguousarray(x.data[:, start:stop])

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _make(data, (x,), grad_fn)


# ---------------------------------------------------------------------------
# softmax and reductions

def spatial_softmax(z: Tensor) -> Tensor:
    """Exp-normalize a single-channel map over all H*W positions per image."""
    z = _wrap(z)
    if z.data.ndim != 4 or z.data.shape[1] != 1:
        raise ShapeError(f"spatial_softmax: need (N, 1, H, W), got {z.data.shape}")
    n, _, h, w = z.data.shape
    flat = z.data.reshape(n, h * w)
    shifted = flat - flat.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        gf = g.reshape(n, h * w)
        dot = (gf * p).sum(axis=1, keepdims=True)
        return ((p * (gf - dot)).reshape(z.data.shape),)

    return _make(p.reshape(z.data.shape), (z,), grad_fn)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of an (N, K) matrix."""
    x = _wrap(x)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows: need (N, K), got {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        return (p * (g - dot),)

    return _make(p, (x,), grad_fn)


def sum_all(x: Tensor) -> Tensor:
    x = _wrap(x)
    shape = x.data.shape
    return _make(np.asarray(x.data.sum()), (x,),
                 lambda g: (np.full(shape, float(g.reshape(()))),))


def mean_all(x: Tensor) -> Tensor:
    x = _wrap(x)
    return scale(sum_all(x), 1.0 / x.data.size)


# ---------------------------------------------------------------------------
# resampling

def avg_pool2(x: Tensor) -> Tensor:
    """2x2 mean pooling with stride 2; spatial extents must be even."""
    x = _wrap(x)
    if x.data.ndim != 4:
        raise ShapeError(f"avg_pool2: need rank-4 map, got {x.data.shape}")
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2: spatial extents must be even, got {h}x{w}")
    data = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def grad_fn(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return _make(data, (x,), grad_fn)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsampling."""
    x = _wrap(x)
    if x.data.ndim != 4:
        raise ShapeError(f"upsample2: need rank-4 map, got {x.data.shape}")
    n, c, h, w = x.data.shape
    data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def grad_fn(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _make(data, (x,), grad_fn)


# ---------------------------------------------------------------------------
# reverse pass

class GradTape:
    """Named registry of parameter leaves for one training step.

    A tape is owned by a single step at a time; replaying `gradients` on the
    same graph yields bit-identical results because traversal order is fixed
    by graph construction order.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def watch(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter '{name}' already registered")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def watch_all(self, named: dict) -> None:
        for name, tensor in named.items():
            self.watch(name, tensor)

    @property
    def params(self) -> dict:
        return dict(self._params)

    def gradients(self, loss: Tensor) -> dict:
        return backward(loss, self)


def _topo_order(root: Tensor) -> list:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order  # parents precede children


def backward(loss: Tensor, tape: GradTape) -> dict:
    """Gradient of a scalar loss for every parameter registered on the tape.

    Unreached parameters get zero gradients. Gradients are also stored on each
    parameter's `.grad` for optimizer use.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad:
        for node in reversed(_topo_order(loss)):
            g = grads[id(node)]
            if node._grad_fn is None:
                continue
            for parent, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] += pg
                else:
                    grads[key] = np.array(pg, dtype=np.float64, copy=True)
            del grads[id(node)]

    out: dict[str, np.ndarray] = {}
    for name, param in tape._params.items():
        g = grads.get(id(param))
        if g is None:
            g = np.zeros_like(param.data)
        param.grad = g
        out[name] = g
    return out
