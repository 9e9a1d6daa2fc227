"""Trainable layers with explicit forward/backward passes.

Every layer exposes `params()` and `grads()` dicts whose arrays are shared
with the optimizer and mutated in place, plus `state()` which adds the
non-trainable bookkeeping (batch-norm running stats) that model files must
carry. Stochastic layers draw from a numpy Generator that can be replaced
through `reseed`, which keeps gradient checking and reruns deterministic.

Shapes follow two conventions: feature tensors (N, D) and image tensors
(N, C, H, W) with H the time axis and W the frequency axis.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from . import kernels


class Layer:
    """Base: stateless pass-through with no parameters."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def state(self) -> dict[str, np.ndarray]:
        return dict(self.params())

    def reseed(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.b = np.zeros(n_out)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}

    def forward(self, x, train=False):
        self._x = x
        return x @ self.w + self.b

    def backward(self, gy):
        self.gw += self._x.T @ gy
        self.gb += gy.sum(axis=0)
        return gy @ self.w.T


class Relu(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, gy):
        return np.where(self._mask, gy, 0.0)


class Elu(Layer):
    """Exponential linear unit, alpha fixed at 1."""

    def forward(self, x, train=False):
        self._neg = x <= 0.0
        self._expm1 = np.expm1(np.minimum(x, 0.0))
        return np.where(self._neg, self._expm1, x)

    def backward(self, gy):
        return np.where(self._neg, gy * (self._expm1 + 1.0), gy)


class ScaledSigmoid(Layer):
    """Sigmoid stretched to (0, scale); the output range of mask heads."""

    def __init__(self, scale: float = 2.0):
        if scale <= 0:
            raise ConfigError("scale must be positive")
        self.scale = scale

    def forward(self, x, train=False):
        self._sig = 1.0 / (1.0 + np.exp(-x))
        return self.scale * self._sig

    def backward(self, gy):
        return gy * self.scale * self._sig * (1.0 - self._sig)


class Dropout(Layer):
    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ConfigError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng
        self._mask: np.ndarray | None = None

    def reseed(self, rng):
        self.rng = rng

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, gy):
        return gy if self._mask is None else gy * self._mask


class BatchNorm(Layer):
    """Batch normalization over every axis except the channel axis.

    Works on (N, C) and (N, C, H, W) alike. Running statistics are updated
    with exponential smoothing during training and used verbatim at eval
    time; they travel with the model file but receive no gradient.
    """

    def __init__(self, n_channels: int, momentum: float = 0.99, eps: float = 1e-3):
        self.gamma = np.ones(n_channels)
        self.beta = np.zeros(n_channels)
        self.run_mean = np.zeros(n_channels)
        self.run_var = np.ones(n_channels)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self.momentum = momentum
        self.eps = eps

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.ggamma, "beta": self.gbeta}

    def state(self):
        return {"gamma": self.gamma, "beta": self.beta,
                "run_mean": self.run_mean, "run_var": self.run_var}

    def _bshape(self, ndim: int) -> tuple[int, ...]:
        return (1, -1) + (1,) * (ndim - 2)

    def forward(self, x, train=False):
        axes = (0,) + tuple(range(2, x.ndim))
        bs = self._bshape(x.ndim)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.run_mean[...] = self.momentum * self.run_mean + (1 - self.momentum) * mean
            self.run_var[...] = self.momentum * self.run_var + (1 - self.momentum) * var
            self._axes = axes
            self._m = x.size // x.shape[1]
            self._xc = x - mean.reshape(bs)
            self._inv_std = 1.0 / np.sqrt(var + self.eps).reshape(bs)
            self._xhat = self._xc * self._inv_std
            return self.gamma.reshape(bs) * self._xhat + self.beta.reshape(bs)
        xhat = (x - self.run_mean.reshape(bs)) / np.sqrt(
            self.run_var.reshape(bs) + self.eps)
        self._xhat = None
        return self.gamma.reshape(bs) * xhat + self.beta.reshape(bs)

    def backward(self, gy):
        if self._xhat is None:
            raise ConfigError("backward through batch norm requires a train-mode forward")
        axes = self._axes
        bs = self._bshape(gy.ndim)
        m = self._m
        self.ggamma += (gy * self._xhat).sum(axis=axes)
        self.gbeta += gy.sum(axis=axes)
        gxhat = gy * self.gamma.reshape(bs)
        term_mean = gxhat.sum(axis=axes).reshape(bs) / m
        term_proj = (gxhat * self._xhat).sum(axis=axes).reshape(bs) / m
        return self._inv_std * (gxhat - term_mean - self._xhat * term_proj)


class Conv2d(Layer):
    """Valid-padding strided 2-D convolution."""

    def __init__(self, c_in: int, c_out: int, kernel: tuple[int, int],
                 stride: tuple[int, int], rng: np.random.Generator):
        kh, kw = kernel
        fan_in = c_in * kh * kw
        fan_out = c_out * kh * kw
        self.w = glorot_uniform(rng, (c_out, c_in, kh, kw), fan_in, fan_out)
        self.b = np.zeros(c_out)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self.stride = stride

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}

    def forward(self, x, train=False):
        self._x = x
        y = kernels.conv2d(x, self.w, self.stride)
        return y + self.b.reshape(1, -1, 1, 1)

    def backward(self, gy):
        self.gw += kernels.conv2d_grad_weights(
            self._x, gy, self.stride, self.w.shape[2:])
        self.gb += gy.sum(axis=(0, 2, 3))
        return kernels.conv2d_grad_input(
            gy, self.w, self.stride, self._x.shape[2:])


class Deconv2d(Layer):
    """Valid-padding strided transposed convolution (upsampling)."""

    def __init__(self, c_in: int, c_out: int, kernel: tuple[int, int],
                 stride: tuple[int, int], rng: np.random.Generator):
        kh, kw = kernel
        fan_in = c_in * kh * kw
        fan_out = c_out * kh * kw
        self.w = glorot_uniform(rng, (c_in, c_out, kh, kw), fan_in, fan_out)
        self.b = np.zeros(c_out)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self.stride = stride

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}

    def forward(self, x, train=False):
        self._x = x
        y = kernels.deconv2d(x, self.w, self.stride)
        return y + self.b.reshape(1, -1, 1, 1)

    def backward(self, gy):
        self.gw += kernels.deconv2d_grad_weights(
            self._x, gy, self.stride, self.w.shape[2:])
        self.gb += gy.sum(axis=(0, 2, 3))
        return kernels.deconv2d_grad_input(gy, self.w, self.stride)


class PadHighFreq(Layer):
    """Zero-pad the frequency (last) axis at the high edge to a target width."""

    def __init__(self, target_width: int):
        self.target_width = target_width

    def forward(self, x, train=False):
        pad = self.target_width - x.shape[-1]
        if pad < 0:
            raise ConfigError(
                f"cannot pad width {x.shape[-1]} down to {self.target_width}")
        self._in_width = x.shape[-1]
        if pad == 0:
            return x
        spec = [(0, 0)] * (x.ndim - 1) + [(0, pad)]
        return np.pad(x, spec)

    def backward(self, gy):
        return gy[..., : self._in_width]


class Sequential(Layer):
    """Plain layer chain with namespaced parameter dictionaries."""

    def __init__(self, named_layers: list[tuple[str, Layer]]):
        self.named_layers = named_layers

    def _collect(self, getter) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, layer in self.named_layers:
            for key, arr in getter(layer).items():
                out[f"{name}.{key}"] = arr
        return out

    def params(self):
        return self._collect(lambda l: l.params())

    def grads(self):
        return self._collect(lambda l: l.grads())

    def state(self):
        return self._collect(lambda l: l.state())

    def reseed(self, rng):
        for _, layer in self.named_layers:
            layer.reseed(rng)

    def forward(self, x, train=False):
        for _, layer in self.named_layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, gy):
        for _, layer in reversed(self.named_layers):
            gy = layer.backward(gy)
        return gy


def zero_grads(layers: list[Layer]) -> None:
    for layer in layers:
        for g in layer.grads().values():
            g[...] = 0.0
