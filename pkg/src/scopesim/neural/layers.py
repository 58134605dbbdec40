"""Layers with hand-written backward passes.

Activations flow channels-last, ``(N, H, W, C)`` for images and ``(N, D)``
after flattening. Each layer declares its parameter shapes; values live in
a flat vector owned by the network and are handed in as a dict of views.
"""
from __future__ import annotations

import numpy as np


class Layer:
    name: str = ""

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def forward(self, p: dict, x: np.ndarray):
        raise NotImplementedError

    def backward(self, p: dict, cache, dy: np.ndarray, g: dict) -> np.ndarray:
        """Accumulate parameter gradients into ``g`` and return the input gradient."""
        raise NotImplementedError


class Conv2d(Layer):
    """Square-kernel convolution with zero padding ``kernel // 2``; im2col + matmul."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1, name: str = "conv"):
        if min(in_ch, out_ch, kernel, stride) < 1:
            raise ValueError(f"{name}: channels, kernel and stride must be positive")
        self.in_ch, self.out_ch, self.k, self.s = in_ch, out_ch, kernel, stride
        self.pad = kernel // 2
        self.name = name

    def param_shapes(self):
        return {"w": (self.k * self.k * self.in_ch, self.out_ch), "b": (self.out_ch,)}

    def out_shape(self, in_shape):
        H, W, C = in_shape
        if C != self.in_ch:
            raise ValueError(f"{self.name}: expected {self.in_ch} input channels, got {C}")
        Ho = (H + 2 * self.pad - self.k) // self.s + 1
        Wo = (W + 2 * self.pad - self.k) // self.s + 1
        if Ho < 1 or Wo < 1:
            raise ValueError(f"{self.name}: input {H}x{W} too small")
        return (Ho, Wo, self.out_ch)

    def forward(self, p, x):
        N, H, W, C = x.shape
        Ho, Wo, _ = self.out_shape((H, W, C))
        k, s, pd = self.k, self.s, self.pad
        xp = np.pad(x, ((0, 0), (pd, pd), (pd, pd), (0, 0))) if pd else x
        cols = np.empty((N, Ho, Wo, k, k, C), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i, j, :] = xp[:, i : i + s * (Ho - 1) + 1 : s, j : j + s * (Wo - 1) + 1 : s, :]
        cols = cols.reshape(N * Ho * Wo, k * k * C)
        y = cols @ p["w"] + p["b"]
        return y.reshape(N, Ho, Wo, self.out_ch), (cols, x.shape)

    def backward(self, p, cache, dy, g):
        cols, (N, H, W, C) = cache
        k, s, pd = self.k, self.s, self.pad
        _, Ho, Wo, Co = dy.shape
        dy2 = dy.reshape(-1, Co)
        g["w"] += cols.T @ dy2
        g["b"] += dy2.sum(axis=0)
        dcols = (dy2 @ p["w"].T).reshape(N, Ho, Wo, k, k, C)
        dxp = np.zeros((N, H + 2 * pd, W + 2 * pd, C), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + s * (Ho - 1) + 1 : s, j : j + s * (Wo - 1) + 1 : s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pd : pd + H, pd : pd + W, :] if pd else dxp


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, name: str = "dense"):
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"{name}: widths must be positive")
        self.in_dim, self.out_dim = in_dim, out_dim
        self.name = name

    def param_shapes(self):
        return {"w": (self.in_dim, self.out_dim), "b": (self.out_dim,)}

    def out_shape(self, in_shape):
        if in_shape != (self.in_dim,):
            raise ValueError(f"{self.name}: expected input ({self.in_dim},), got {in_shape}")
        return (self.out_dim,)

    def forward(self, p, x):
        return x @ p["w"] + p["b"], x

    def backward(self, p, x, dy, g):
        g["w"] += x.T @ dy
        g["b"] += dy.sum(axis=0)
        return dy @ p["w"].T


class ReLU(Layer):
    name = "relu"

    def forward(self, p, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, p, mask, dy, g):
        return dy * mask


class Tanh(Layer):
    name = "tanh"

    def forward(self, p, x):
        y = np.tanh(x)
        return y, y

    def backward(self, p, y, dy, g):
        return dy * (1.0 - y * y)


class Flatten(Layer):
    name = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, p, x):
        return x.reshape(len(x), -1), x.shape

    def backward(self, p, shape, dy, g):
        return dy.reshape(shape)


ACTIVATIONS = {"relu": ReLU, "tanh": Tanh}


def activation(name: str) -> Layer:
    try:
        return ACTIVATIONS[name]()
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None
