"""Parameter containers and the handful of layers the recognizer is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Owns parameters (trainable tensors), buffers (numpy arrays) and child modules.

    Names are derived from attribute names in assignment order, dotted through
    children, e.g. ``enc.block1.layer0.conv3.w``.
    """

    training = True

    def __init__(self):
        self._buffers: dict[str, np.ndarray] = {}

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in self._children():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        """All parameters and buffers by name, in a stable order."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        unknown = set(state) - set(own) - set(buffers)
        if unknown:
            raise KeyError(f"unknown tensor name {sorted(unknown)[0]!r}")
        for name in list(own) + list(buffers):
            if name not in state:
                raise KeyError(f"missing tensor {name!r}")
            target = own[name].data if name in own else buffers[name]
            value = np.asarray(state[name])
            if value.shape != target.shape:
                raise ValueError(f"tensor {name!r}: shape {value.shape} does not match {target.shape}")
            target[...] = value

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for _, child in self._children():
            if isinstance(child, Module):
                child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def astype(self, dtype) -> Module:
        """Cast every parameter and buffer in place (used by 64-bit gradient checks)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, value in self._children():
            if isinstance(value, Module):
                value.astype(dtype)
        for name, buf in list(self._buffers.items()):
            self._buffers[name] = buf.astype(dtype)
        return self


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=data.dtype)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator, padding: int = 0):
        super().__init__()
        self.padding = padding
        self.w = parameter(
            T.glorot_uniform((out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel, out_ch * kernel * kernel, rng)
        )

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, stride=1, padding=self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        dtype = T.default_dtype()
        self.momentum = momentum
        self.eps = eps
        self.gamma = parameter(np.ones(channels, dtype=dtype))
        self.beta = parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return T.batchnorm(
            x,
            self.gamma,
            self.beta,
            self._buffers["running_mean"],
            self._buffers["running_var"],
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class Linear(Module):
    """``x @ w + b`` with Glorot-uniform ``w`` and zero ``b``."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.w = parameter(T.glorot_uniform((in_dim, out_dim), in_dim, out_dim, rng))
        if bias:
            self.b = parameter(np.zeros(out_dim, dtype=T.default_dtype()))
        else:
            self.b = None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.w)
        return y if self.b is None else y + self.b


class LSTMCell(Module):
    """Single LSTM cell; gates packed as [input, forget, candidate, output]."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.wx = parameter(T.glorot_uniform((in_dim, 4 * hidden), in_dim, 4 * hidden, rng))
        self.wh = parameter(T.glorot_uniform((hidden, 4 * hidden), hidden, 4 * hidden, rng))
        b = np.zeros(4 * hidden, dtype=T.default_dtype())
        b[hidden : 2 * hidden] = 1.0
        self.b = parameter(b)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        n = self.hidden
        z = T.matmul(x, self.wx) + T.matmul(h, self.wh) + self.b
        i = T.sigmoid(z[:, :n])
        f = T.sigmoid(z[:, n : 2 * n])
        g = T.tanh(z[:, 2 * n : 3 * n])
        o = T.sigmoid(z[:, 3 * n :])
        c_new = f * c + i * g
        h_new = o * T.tanh(c_new)
        return h_new, c_new
