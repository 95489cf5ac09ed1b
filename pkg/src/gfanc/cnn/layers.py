"""Layers with hand-written backward passes.

Activations are channels-last: ``(batch, length, channels)``. Every layer
keeps whatever it needs from the last training-mode ``forward`` call and
fills ``grads`` (same keys as ``params``) in ``backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gfanc.errors import InvalidArgument

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def config(self) -> dict:
        return {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def sublayers(self) -> list["Layer"]:
        return [self]


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, rng=None, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel = int(in_ch), int(out_ch), int(kernel)
        self.stride, self.padding = int(stride), int(padding)
        fan_in = self.in_ch * self.kernel
        bound = np.sqrt(6.0 / fan_in)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = rng.uniform(-bound, bound, (self.out_ch, self.in_ch, self.kernel)).astype(dtype)
        self.params["b"] = np.zeros(self.out_ch, dtype=dtype)
        self.need_input_grad = True

    def config(self):
        return dict(in_ch=self.in_ch, out_ch=self.out_ch, kernel=self.kernel, stride=self.stride, padding=self.padding)

    def out_length(self, length: int) -> int:
        return (length + 2 * self.padding - self.kernel) // self.stride + 1

    def forward(self, x, train=False):
        B, L, C = x.shape
        if C != self.in_ch:
            raise InvalidArgument(f"conv1d expects {self.in_ch} channels, got {C}")
        Lout = self.out_length(L)
        if Lout < 1:
            raise InvalidArgument("input shorter than kernel")
        xp = np.pad(x, ((0, 0), (self.padding, self.padding), (0, 0))) if self.padding else x
        win = sliding_window_view(xp, self.kernel, axis=1)[:, : (Lout - 1) * self.stride + 1 : self.stride]
        cols = win.reshape(B * Lout, C * self.kernel)
        Wm = self.params["W"].reshape(self.out_ch, -1)
        out = cols @ Wm.T + self.params["b"]
        if train:
            self._cache = (cols, L, Lout)
        return out.reshape(B, Lout, self.out_ch)

    def backward(self, dout):
        cols, L, Lout = self._cache
        B = dout.shape[0]
        d2 = dout.reshape(B * Lout, self.out_ch)
        Wm = self.params["W"].reshape(self.out_ch, -1)
        self.grads["W"] = (d2.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = d2.sum(axis=0)
        if not self.need_input_grad:
            return None
        dcols = (d2 @ Wm).reshape(B, Lout, self.in_ch, self.kernel)
        dxp = np.zeros((B, L + 2 * self.padding, self.in_ch), dtype=dout.dtype)
        span = (Lout - 1) * self.stride + 1
        for j in range(self.kernel):
            dxp[:, j : j + span : self.stride] += dcols[..., j]
        return dxp[:, self.padding : self.padding + L]


class BatchNorm1d(Layer):
    kind = "batchnorm1d"

    def __init__(self, channels, dtype=np.float32):
        super().__init__()
        self.channels = int(channels)
        self.params["gamma"] = np.ones(self.channels, dtype=dtype)
        self.params["beta"] = np.zeros(self.channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(self.channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(self.channels, dtype=dtype)

    def config(self):
        return dict(channels=self.channels)

    def forward(self, x, train=False):
        g, b = self.params["gamma"], self.params["beta"]
        if not train:
            inv = 1.0 / np.sqrt(self.buffers["running_var"] + BN_EPS)
            return (x - self.buffers["running_mean"]) * (inv * g).astype(x.dtype) + b
        mean = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
        inv = (1.0 / np.sqrt(var + BN_EPS)).astype(x.dtype)
        xhat = (x - mean) * inv
        rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
        rm *= 1.0 - BN_MOMENTUM
        rm += BN_MOMENTUM * mean
        rv *= 1.0 - BN_MOMENTUM
        rv += BN_MOMENTUM * var
        self._cache = (xhat, inv)
        return xhat * g + b

    def backward(self, dout):
        xhat, inv = self._cache
        n = dout.shape[0] * dout.shape[1]
        self.grads["gamma"] = (dout * xhat).sum(axis=(0, 1))
        self.grads["beta"] = dout.sum(axis=(0, 1))
        dxhat = dout * self.params["gamma"]
        return (inv / n) * (n * dxhat - dxhat.sum(axis=(0, 1)) - xhat * (dxhat * xhat).sum(axis=(0, 1)))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._mask


class MaxPool1d(Layer):
    kind = "maxpool1d"

    def __init__(self, size):
        super().__init__()
        self.size = int(size)

    def config(self):
        return dict(size=self.size)

    def forward(self, x, train=False):
        B, L, C = x.shape
        Lout = L // self.size
        if Lout < 1:
            raise InvalidArgument("input shorter than pooling window")
        blocks = x[:, : Lout * self.size].reshape(B, Lout, self.size, C)
        idx = blocks.argmax(axis=2)
        if train:
            self._cache = (idx, L)
        return np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, dout):
        idx, L = self._cache
        B, Lout, C = dout.shape
        blocks = np.zeros((B, Lout, self.size, C), dtype=dout.dtype)
        np.put_along_axis(blocks, idx[:, :, None, :], dout[:, :, None, :], axis=2)
        dx = np.zeros((B, L, C), dtype=dout.dtype)
        dx[:, : Lout * self.size] = blocks.reshape(B, Lout * self.size, C)
        return dx


class GlobalAvgPool(Layer):
    kind = "globalavgpool"

    def forward(self, x, train=False):
        if train:
            self._length = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dout):
        L = self._length
        return np.repeat((dout / L)[:, None, :], L, axis=1)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim, out_dim, rng=None, dtype=np.float32):
        super().__init__()
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        bound = np.sqrt(6.0 / self.in_dim)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = rng.uniform(-bound, bound, (self.in_dim, self.out_dim)).astype(dtype)
        self.params["b"] = np.zeros(self.out_dim, dtype=dtype)

    def config(self):
        return dict(in_dim=self.in_dim, out_dim=self.out_dim)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise InvalidArgument(f"dense expects (batch, {self.in_dim}) input, got {x.shape}")
        if train:
            self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class ResBlock(Layer):
    """conv-BN-ReLU-conv-BN plus a shortcut, followed by ReLU.

    The shortcut is a strided 1x1 convolution when the shape changes and the
    identity otherwise.
    """

    kind = "resblock"

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, rng=None, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.stride = int(in_ch), int(out_ch), int(kernel), int(stride)
        pad = self.kernel // 2
        self.main = [
            Conv1d(in_ch, out_ch, kernel, stride, pad, rng, dtype),
            BatchNorm1d(out_ch, dtype),
            ReLU(),
            Conv1d(out_ch, out_ch, kernel, 1, pad, rng, dtype),
            BatchNorm1d(out_ch, dtype),
        ]
        self.shortcut = Conv1d(in_ch, out_ch, 1, stride, 0, rng, dtype) if (stride != 1 or in_ch != out_ch) else None
        self.out_relu = ReLU()

    def config(self):
        return dict(in_ch=self.in_ch, out_ch=self.out_ch, kernel=self.kernel, stride=self.stride)

    def sublayers(self):
        subs = list(self.main)
        if self.shortcut is not None:
            subs.append(self.shortcut)
        return subs + [self.out_relu]

    def forward(self, x, train=False):
        h = x
        for layer in self.main:
            h = layer.forward(h, train)
        short = self.shortcut.forward(x, train) if self.shortcut is not None else x
        if short.shape != h.shape:
            raise InvalidArgument(f"residual shapes differ: {short.shape} vs {h.shape}")
        return self.out_relu.forward(h + short, train)

    def backward(self, dout):
        d = self.out_relu.backward(dout)
        dmain = d
        for layer in reversed(self.main):
            dmain = layer.backward(dmain)
        dshort = self.shortcut.backward(d) if self.shortcut is not None else d
        return dmain + dshort


LAYER_TYPES = {cls.kind: cls for cls in (Conv1d, BatchNorm1d, ReLU, MaxPool1d, GlobalAvgPool, Dense, ResBlock)}
