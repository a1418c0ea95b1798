"""1-D convolution and transposed convolution as fused tape ops.

Forward passes gather strided patches and contract them with einsum
(which dispatches to BLAS); backward passes scatter-add gradients back
through the same index map, so conv1d and deconv1d are exact adjoints
of each other when they share a weight array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ShapeMismatchError
from .tensor import Tensor, _make, as_tensor


@dataclass(frozen=True)
class ConvSpec:
    """Static geometry of a 1-D (de)convolution layer."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    dilation: int = 1
    groups: int = 1
    padding: int = 0  # zeros added per side

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel", "stride", "dilation", "groups"):
            if getattr(self, name) < 1:
                raise ShapeMismatchError(f"ConvSpec.{name} must be positive")
        if self.padding < 0:
            raise ShapeMismatchError("ConvSpec.padding must be nonnegative")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeMismatchError(
                f"channels ({self.in_channels}->{self.out_channels}) not divisible "
                f"by groups ({self.groups})"
            )

    @property
    def depthwise(self) -> bool:
        return self.groups == self.in_channels

    def out_frames(self, in_frames: int) -> int:
        span = self.dilation * (self.kernel - 1) + 1
        n = (in_frames + 2 * self.padding - span) // self.stride + 1
        if n < 1:
            raise ShapeMismatchError(
                f"{in_frames} frames too few for kernel {self.kernel} "
                f"dilation {self.dilation}"
            )
        return n

    def weight_shape(self) -> tuple:
        return (self.out_channels, self.in_channels // self.groups, self.kernel)


def _patches(x: np.ndarray, spec: ConvSpec, n_out: int) -> np.ndarray:
    """Zero-copy (batch, C, n_out, kernel) view with stride/dilation applied."""
    sb, sc, st = x.strides
    return as_strided(
        x,
        shape=(x.shape[0], x.shape[1], n_out, spec.kernel),
        strides=(sb, sc, st * spec.stride, st * spec.dilation),
        writeable=False,
    )


def conv1d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Grouped/dilated 1-D convolution.

    x: (batch, in_channels, frames); weight: (out_channels,
    in_channels/groups, kernel); bias: (out_channels,) or None.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or x.shape[1] != spec.in_channels:
        raise ShapeMismatchError(f"conv1d input {x.shape} vs in_channels {spec.in_channels}")
    if weight.shape != spec.weight_shape():
        raise ShapeMismatchError(f"conv1d weight {weight.shape} vs {spec.weight_shape()}")
    batch, _, frames = x.shape
    n_out = spec.out_frames(frames)
    xd = x.data
    if spec.padding:
        xd = np.pad(xd, ((0, 0), (0, 0), (spec.padding, spec.padding)))
    G = spec.groups
    ci_g = spec.in_channels // G
    co_g = spec.out_channels // G
    pats = _patches(xd, spec, n_out).reshape(batch, G, ci_g, n_out, spec.kernel)
    w_g = weight.data.reshape(G, co_g, ci_g, spec.kernel)
    out = np.einsum("bgitk,goik->bgot", pats, w_g, optimize=True)
    out = out.reshape(batch, spec.out_channels, n_out)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None]
        parents.append(bias)

    def backward(g):
        g_g = g.reshape(batch, G, co_g, n_out)
        if weight.requires_grad:
            gw = np.einsum("bgot,bgitk->goik", g_g, pats, optimize=True)
            weight._accumulate(gw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gp = np.einsum("bgot,goik->bgitk", g_g, w_g, optimize=True)
            gp = gp.reshape(batch, spec.in_channels, n_out, spec.kernel)
            gx = np.zeros_like(xd)
            for k in range(spec.kernel):
                lo = k * spec.dilation
                gx[:, :, lo : lo + spec.stride * n_out : spec.stride] += gp[:, :, :, k]
            if spec.padding:
                gx = gx[:, :, spec.padding : spec.padding + frames]
            x._accumulate(gx)

    return _make(out, tuple(parents), backward)


def deconv1d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Transposed 1-D convolution (overlap-add of weighted kernels).

    x: (batch, in_channels, frames); weight: (in_channels, out_channels,
    kernel); output frames = (frames-1)*stride + kernel.  With a shared
    weight array this is the exact adjoint of conv1d, i.e.
    <conv1d(a), b> == <a, deconv1d(b)>.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if spec.groups != 1 or spec.dilation != 1 or spec.padding != 0:
        raise ShapeMismatchError("deconv1d supports groups=1, dilation=1, padding=0")
    if x.ndim != 3 or x.shape[1] != spec.in_channels:
        raise ShapeMismatchError(f"deconv1d input {x.shape} vs in_channels {spec.in_channels}")
    if weight.shape != (spec.in_channels, spec.out_channels, spec.kernel):
        raise ShapeMismatchError(
            f"deconv1d weight {weight.shape} vs "
            f"{(spec.in_channels, spec.out_channels, spec.kernel)}"
        )
    batch, _, frames = x.shape
    n_out = (frames - 1) * spec.stride + spec.kernel
    prod = np.einsum("bct,col->botl", x.data, weight.data, optimize=True)
    out = np.zeros((batch, spec.out_channels, n_out))
    for k in range(spec.kernel):
        out[:, :, k : k + spec.stride * frames : spec.stride] += prod[:, :, :, k]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data[None, :, None]
        parents.append(bias)

    def backward(g):
        gp = np.empty((batch, spec.out_channels, frames, spec.kernel))
        for k in range(spec.kernel):
            gp[:, :, :, k] = g[:, :, k : k + spec.stride * frames : spec.stride]
        if x.requires_grad:
            x._accumulate(np.einsum("botl,col->bct", gp, weight.data, optimize=True))
        if weight.requires_grad:
            weight._accumulate(np.einsum("bct,botl->col", x.data, gp, optimize=True))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))

    return _make(out, tuple(parents), backward)
