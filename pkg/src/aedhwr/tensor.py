"""Dense N-d arrays with reverse-mode automatic differentiation.

Every operation the recognizer needs lives here as a plain function taking and
returning :class:`Tensor`. Each result remembers its parents and a closure that
maps the output gradient to parent gradients; :func:`backward` replays those
closures in reverse execution order.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes or axes are incompatible."""


class ConfigurationError(ValueError):
    """An operation was configured so that it cannot produce output."""


class UsageError(RuntimeError):
    """The autodiff machinery was driven incorrectly."""


_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_BRANCH_LOG: list | None = None
_counter = itertools.count()


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for new tensors (float64 for gradient checks)."""
    global _DEFAULT_DTYPE
    old, _DEFAULT_DTYPE = _DEFAULT_DTYPE, np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


@contextlib.contextmanager
def no_grad():
    """Disable graph recording, e.g. for inference on a frozen model."""
    global _GRAD_ENABLED
    old, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def trace_branches():
    """Collect the branch taken by every piecewise op (relu sign, max-pool argmax).

    Two forward passes with equal traces lie on the same smooth piece, which is
    what a finite-difference gradient check needs to be meaningful.
    """
    global _BRANCH_LOG
    old, _BRANCH_LOG = _BRANCH_LOG, []
    try:
        yield _BRANCH_LOG
    finally:
        _BRANCH_LOG = old


class Tensor:
    """A numpy array plus the bookkeeping needed to differentiate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_order", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._order = next(_counter)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # operator sugar
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, np.ndarray) and x.dtype.kind == "f":
        dtype = x.dtype
    return Tensor(x, dtype=dtype)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for a {ndim}-d tensor")
    return axis % ndim


def _operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(b, dtype=a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(a, dtype=b.dtype)
    return a, b


def _broadcast_shape(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b)

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * a.data / b.data, b.shape)

    return _result(a.data / b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    if _BRANCH_LOG is not None:
        _BRANCH_LOG.append(mask)
    return _result(np.maximum(a.data, 0), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)
    return _result(y, (a,), lambda g: (g * y * (1 - y),))


def where(cond: np.ndarray, a: Tensor, fill: float) -> Tensor:
    """Keep ``a`` where ``cond`` is true, else the constant ``fill`` (no gradient there)."""
    cond = np.asarray(cond, dtype=bool)
    out = np.where(cond, a.data, np.asarray(fill, dtype=a.dtype))
    return _result(out, (a,), lambda g: (np.where(cond, g, 0).astype(g.dtype),))


# ------------------------------------------------------------------ reductions


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if isinstance(axis, int):
        axis = _check_axis(axis, a.ndim)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(out, dtype=a.dtype), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[_check_axis(ax, a.ndim)] for ax in axes]))
    return mul(sum_(a, axis, keepdims), 1.0 / count)


# ------------------------------------------------------------------- structure


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(np.array(out, dtype=a.dtype), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    axis = _check_axis(axis, tensors[0].ndim)
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != axis
        ):
            raise DimensionError(
                f"concat along axis {axis}: shapes {tensors[0].shape} and {t.shape} disagree"
            )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return _result(out, tensors, backward)


def pad2d(a: Tensor, bottom: int, right: int, value: float = 0.0) -> Tensor:
    """Pad the last two axes at the bottom/right with a constant."""
    if bottom == 0 and right == 0:
        return a
    width = [(0, 0)] * (a.ndim - 2) + [(0, bottom), (0, right)]
    out = np.pad(a.data, width, constant_values=value)
    h, w = a.shape[-2:]
    return _result(out, (a,), lambda g: (g[..., :h, :w],))


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., m, k) and a 2-d ``b`` of shape (k, n)."""
    a, b = _operands(a, b)
    if b.ndim != 2 or a.ndim < 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _result(out, (a, b), backward)


def embedding(table: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise DimensionError(f"embedding index out of range for table of {table.shape[0]} rows")

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(table.data[index], (table,), backward)


# ------------------------------------------------------------------- softmax


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(axis, a.ndim)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(axis, a.ndim)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _result(y, (a,), backward)


def pick(a: Tensor, index) -> Tensor:
    """Select ``a[i, index[i]]`` for each row of a 2-d tensor."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, index] = g
        return (full,)

    return _result(a.data[rows, index], (a,), backward)


# -------------------------------------------------------------- convolution


def _out_extent(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate an N×C×H×W input with an F×C×kh×kw kernel."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ho = _out_extent(h, kh, stride, padding)
    wo = _out_extent(wd, kw, stride, padding)
    if (h + 2 * padding - kh) < 0 or (wd + 2 * padding - kw) < 0 or ho < 1 or wo < 1:
        raise ConfigurationError(f"conv2d output extent non-positive for input {x.shape}, kernel {w.shape}")

    if kh == kw == 1 and stride == 1 and padding == 0:
        w2 = w.data.reshape(f, c)
        xf = x.data.reshape(n, c, h * wd)
        out = np.matmul(w2, xf).reshape(n, f, h, wd)

        def backward(g):
            gf = g.reshape(n, f, h * wd)
            gx = np.matmul(w2.T, gf).reshape(x.shape)
            gw = np.einsum("nfp,ncp->fc", gf, xf, optimize=True).reshape(w.shape)
            return gx, gw

        return _result(out, (x, w), backward)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, ho, wo, stride)
    w2 = w.data.reshape(f, c * kh * kw)
    out = np.matmul(w2, cols).reshape(n, f, ho, wo)

    def backward(g):
        gf = g.reshape(n, f, ho * wo)
        gw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        if stride == 1 and padding <= min(kh, kw) - 1:
            # input gradient = full correlation of g with the rotated kernel
            w_rot = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1 - padding,) * 2, (kw - 1 - padding,) * 2))
            gcols = _im2col(gp, kh, kw, h, wd, 1)
            gx = np.matmul(np.ascontiguousarray(w_rot).reshape(c, f * kh * kw), gcols).reshape(x.shape)
            return gx, gw
        gcols = np.matmul(w2.T, gf).reshape(n, c, kh * kw, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, :, i * kw + j]
        return gxp[:, :, padding : padding + h, padding : padding + wd], gw

    return _result(out, (x, w), backward)


def _im2col(xp: np.ndarray, kh: int, kw: int, ho: int, wo: int, stride: int) -> np.ndarray:
    """N x (C*kh*kw) x (ho*wo) patch matrix, channel-major then kernel offset."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh * kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i * kw + j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _pool_input(x: Tensor, value: float) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"pooling expects N×C×H×W, got {x.shape}")
    return pad2d(x, x.shape[2] % 2, x.shape[3] % 2, value)


def maxpool2d(x: Tensor, size: int = 2, stride: int = 2, pad_value: float = 0.0) -> Tensor:
    """2×2/stride-2 max pooling; odd extents get one pad row/column at bottom/right."""
    if size != 2 or stride != 2:
        raise ConfigurationError("only 2x2 stride-2 pooling is supported")
    x = _pool_input(x, pad_value)
    n, c, h, w = x.shape
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)  # first occurrence in row-major window order
    if _BRANCH_LOG is not None:
        _BRANCH_LOG.append(arg)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return _result(out, (x,), backward)


def avgpool2d(x: Tensor, size: int = 2, stride: int = 2, pad_value: float = 0.0) -> Tensor:
    if size != 2 or stride != 2:
        raise ConfigurationError("only 2x2 stride-2 pooling is supported")
    x = _pool_input(x, pad_value)
    n, c, h, w = x.shape
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * np.asarray(0.25, dtype=g.dtype)
        return (gx,)

    return _result(out.astype(x.dtype), (x,), backward)


# ------------------------------------------------------------ normalization


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization of an N×C×H×W tensor.

    In training mode the batch statistics are used and the running buffers are
    updated in place; in eval mode the running buffers are used.
    """
    if x.ndim != 4:
        raise DimensionError(f"batchnorm expects N×C×H×W, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm affine params {gamma.shape}/{beta.shape} vs {c} channels")
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if count == 0:
        raise ConfigurationError("batchnorm over an empty batch")
    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        unbiased = var * count / max(count - 1, 1)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        gbeta = g.sum(axis=axes)
        ggamma = (g * xhat).sum(axis=axes)
        dxhat = g * gamma.data[None, :, None, None]
        if training:
            s1 = dxhat.sum(axis=axes, keepdims=True)
            s2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
            gx = (inv[None, :, None, None] / count) * (count * dxhat - s1 - xhat * s2)
        else:
            gx = dxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return _result(out.astype(x.dtype), (x, gamma, beta), backward)


# ---------------------------------------------------------------- backward


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every requires-grad leaf reachable from a scalar loss.

    Nodes are visited in reverse execution order; afterwards the recorded graph
    is released so intermediate buffers can be freed.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor requiring grad")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in nodes:
            continue
        nodes[id(t)] = t
        stack.extend(p for p in t._parents if p.requires_grad)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in sorted(nodes.values(), key=lambda t: t._order, reverse=True):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.is_leaf:
            t.grad = np.array(g, dtype=t.dtype) if t.grad is None else t.grad + g
            continue
        for parent, pg in zip(t._parents, t._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

    for t in nodes.values():
        if not t.is_leaf:
            t._parents = ()
            t._backward = None


def glorot_uniform(shape: Iterable[int], fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=tuple(shape)).astype(_DEFAULT_DTYPE)
