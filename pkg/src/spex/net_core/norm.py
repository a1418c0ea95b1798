"""Trainable normalizations over (batch, channels, frames) tensors."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor, _make, as_tensor

NORM_EPS = 1e-8


def _norm(x: Tensor, gain: Tensor, bias: Tensor, axes: tuple) -> Tensor:
    """Standardize over `axes`, then apply per-channel gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.ndim != 3:
        raise ShapeMismatchError(f"norm expects (batch, channels, frames), got {x.shape}")
    if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeMismatchError(
            f"gain/bias must be ({x.shape[1]},), got {gain.shape}/{bias.shape}"
        )
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = (x.data - mu) * inv
    g1 = gain.data[None, :, None]
    out = g1 * xhat + bias.data[None, :, None]

    def backward(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=(0, 2)))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            h = g * g1
            hm = h.mean(axis=axes, keepdims=True)
            hx = (h * xhat).mean(axis=axes, keepdims=True)
            x._accumulate((h - hm - xhat * hx) * inv)

    return _make(out, (x, gain, bias), backward)


def global_layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Mean/variance taken jointly over channels and frames, per batch item."""
    return _norm(x, gain, bias, axes=(1, 2))


def channel_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Mean/variance taken over channels only, independently per frame."""
    return _norm(x, gain, bias, axes=(1,))
