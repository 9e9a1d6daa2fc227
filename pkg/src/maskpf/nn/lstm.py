"""Recurrent layer: a from-scratch LSTM over (N, T, D) sequences.

Gate layout in the fused weight matrices is [input, forget, candidate,
output]. Input and recurrent dropout use one mask per sample held fixed
across all time steps, the usual recipe for recurrent nets. Backward is
full backpropagation through time and accumulates into the same grads()
arrays the optimizer sees.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .layers import Layer, glorot_uniform


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Orthogonal init for square recurrent blocks via QR of a Gaussian draw."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


class Lstm(Layer):
    """Single LSTM layer returning the full output sequence (N, T, H)."""

    def __init__(self, n_in: int, n_units: int, rng: np.random.Generator,
                 dropout: float = 0.0, recurrent_dropout: float = 0.0):
        if not (0.0 <= dropout < 1.0 and 0.0 <= recurrent_dropout < 1.0):
            raise ConfigError("dropout rates must be in [0, 1)")
        h = n_units
        self.n_in = n_in
        self.n_units = h
        self.wx = glorot_uniform(rng, (n_in, 4 * h), n_in, 4 * h)
        self.wh = np.concatenate(
            [orthogonal(rng, h) for _ in range(4)], axis=1)
        self.b = np.zeros(4 * h)
        self.b[h : 2 * h] = 1.0  # forget gate starts open
        self.gwx = np.zeros_like(self.wx)
        self.gwh = np.zeros_like(self.wh)
        self.gb = np.zeros_like(self.b)
        self.dropout = dropout
        self.recurrent_dropout = recurrent_dropout
        self.rng = np.random.default_rng(0)

    def params(self):
        return {"wx": self.wx, "wh": self.wh, "b": self.b}

    def grads(self):
        return {"wx": self.gwx, "wh": self.gwh, "b": self.gb}

    def reseed(self, rng):
        self.rng = rng

    def forward(self, x, train=False):
        n, t_len, d = x.shape
        if d != self.n_in:
            raise ConfigError(f"expected input width {self.n_in}, got {d}")
        h = self.n_units
        if train and self.dropout > 0.0:
            keep = 1.0 - self.dropout
            mx = (self.rng.random((n, d)) < keep) / keep
        else:
            mx = None
        if train and self.recurrent_dropout > 0.0:
            keep = 1.0 - self.recurrent_dropout
            mh = (self.rng.random((n, h)) < keep) / keep
        else:
            mh = None
        self._mx, self._mh = mx, mh
        self._steps = []
        h_t = np.zeros((n, h))
        c_t = np.zeros((n, h))
        out = np.empty((n, t_len, h))
        for t in range(t_len):
            xt = x[:, t] if mx is None else x[:, t] * mx
            hp = h_t if mh is None else h_t * mh
            a = xt @ self.wx + hp @ self.wh + self.b
            gi = _sigmoid(a[:, :h])
            gf = _sigmoid(a[:, h : 2 * h])
            gc = np.tanh(a[:, 2 * h : 3 * h])
            go = _sigmoid(a[:, 3 * h :])
            c_prev = c_t
            c_t = gf * c_prev + gi * gc
            tc = np.tanh(c_t)
            h_t = go * tc
            out[:, t] = h_t
            self._steps.append((xt, hp, gi, gf, gc, go, c_prev, tc))
        return out

    def backward(self, gy):
        n, t_len, h = gy.shape
        gx = np.empty((n, t_len, self.n_in))
        dh_next = np.zeros((n, h))
        dc_next = np.zeros((n, h))
        for t in range(t_len - 1, -1, -1):
            xt, hp, gi, gf, gc, go, c_prev, tc = self._steps[t]
            dh = gy[:, t] + dh_next
            dgo = dh * tc * go * (1.0 - go)
            dc = dh * go * (1.0 - tc * tc) + dc_next
            dgf = dc * c_prev * gf * (1.0 - gf)
            dgi = dc * gc * gi * (1.0 - gi)
            dgc = dc * gi * (1.0 - gc * gc)
            da = np.concatenate([dgi, dgf, dgc, dgo], axis=1)
            self.gwx += xt.T @ da
            self.gwh += hp.T @ da
            self.gb += da.sum(axis=0)
            dxt = da @ self.wx.T
            gx[:, t] = dxt if self._mx is None else dxt * self._mx
            dhp = da @ self.wh.T
            dh_next = dhp if self._mh is None else dhp * self._mh
            dc_next = dc * gf
        return gx
