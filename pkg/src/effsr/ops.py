"""Dense NCHW tensor kernels.

Tensors are plain 4-D numpy arrays laid out as (batch, channels, height,
width). Every kernel is a pure function; float64 inputs give float64
outputs and all equivalence tolerances in this package refer to that path.
float32 inputs are accepted as a faster path.

Convolution uses the cross-correlation convention (no kernel flip) and
zero padding, as in every deep-learning framework.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor or parameter dimensions are inconsistent."""


Padding = Tuple[int, int, int, int]  # top, bottom, left, right


def _pair(v) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ValueError(f"expected a pair, got {v!r}")
        return int(v[0]), int(v[1])
    return int(v), int(v)


def as_padding(padding) -> Padding:
    """Normalise an int, (ph, pw) pair or (top, bottom, left, right) quad."""
    if isinstance(padding, (tuple, list)) and len(padding) == 4:
        return tuple(int(p) for p in padding)  # type: ignore[return-value]
    ph, pw = _pair(padding)
    return ph, ph, pw, pw


@dataclass
class Conv2dParams:
    """Weights, optional bias and geometry of one 2-D convolution."""

    weight: np.ndarray  # (c_out, c_in // groups, k_h, k_w)
    bias: Optional[np.ndarray] = None  # (c_out,)
    stride: int = 1
    padding: Padding = (0, 0, 0, 0)
    dilation: int = 1
    groups: int = 1

    def __post_init__(self):
        self.weight = np.asarray(self.weight)
        if self.weight.ndim != 4:
            raise ShapeError(f"weight must be 4-D, got shape {self.weight.shape}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias)
            if self.bias.shape != (self.weight.shape[0],):
                raise ShapeError(
                    f"bias shape {self.bias.shape} does not match c_out={self.weight.shape[0]}"
                )
        self.padding = as_padding(self.padding)
        if self.stride < 1 or self.dilation < 1 or self.groups < 1:
            raise ValueError("stride, dilation and groups must be >= 1")
        if min(self.padding) < 0:
            raise ValueError(f"negative padding {self.padding}")
        c_out, _, kh, kw = self.weight.shape
        if kh < 1 or kw < 1:
            raise ShapeError(f"empty kernel {kh}x{kw}")
        if c_out % self.groups:
            raise ShapeError(f"c_out={c_out} not divisible by groups={self.groups}")

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    @property
    def num_params(self) -> int:
        return self.weight.size + (0 if self.bias is None else self.bias.size)


def conv_output_size(size: int, k: int, pad_lo: int, pad_hi: int, stride: int, dilation: int) -> int:
    return (size + pad_lo + pad_hi - dilation * (k - 1) - 1) // stride + 1


def conv2d(x: np.ndarray, p: Conv2dParams) -> np.ndarray:
    """2-D cross-correlation with zero padding, stride, dilation and groups.

    Implemented as one matrix product per kernel tap, accumulated in a fixed
    order so that repeated calls are bit-identical.
    """
    if x.ndim != 4:
        raise ShapeError(f"input must be 4-D (b, c, h, w), got shape {x.shape}")
    b, c, h, w = x.shape
    if c != p.c_in:
        raise ShapeError(f"input channels: tensor has {c}, conv expects c_in={p.c_in}")
    kh, kw = p.kernel_size
    pt, pb, pl, pr = p.padding
    ho = conv_output_size(h, kh, pt, pb, p.stride, p.dilation)
    wo = conv_output_size(w, kw, pl, pr, p.stride, p.dilation)
    if ho < 1:
        raise ShapeError(f"height: input {h} with padding ({pt},{pb}) is too small for kernel {kh}")
    if wo < 1:
        raise ShapeError(f"width: input {w} with padding ({pl},{pr}) is too small for kernel {kw}")

    # computation precision follows the input; weights are cast to it
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64
    xp = np.pad(x.astype(dtype, copy=False), ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    # (k_h, k_w, c_out, c_in/g) so every tap is a contiguous matrix for BLAS
    taps = np.ascontiguousarray(p.weight.astype(dtype, copy=False).transpose(2, 3, 0, 1))
    g = p.groups
    cig = c // g
    cog = p.c_out // g
    s, d = p.stride, p.dilation
    out = np.zeros((b, p.c_out, ho * wo), dtype=dtype)
    for gi in range(g):
        xg = xp[:, gi * cig:(gi + 1) * cig]
        wg = taps[:, :, gi * cog:(gi + 1) * cog]
        og = out[:, gi * cog:(gi + 1) * cog]
        for i in range(kh):
            for j in range(kw):
                y0, x0 = i * d, j * d
                patch = xg[:, :, y0:y0 + s * (ho - 1) + 1:s, x0:x0 + s * (wo - 1) + 1:s]
                og += wg[i, j] @ patch.reshape(b, cig, ho * wo)
    out = out.reshape(b, p.c_out, ho, wo)
    if p.bias is not None:
        out += p.bias.astype(dtype, copy=False)[None, :, None, None]
    return out


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, x * slope)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def prelu(x: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """Leaky ReLU with one slope per channel (or a single shared slope)."""
    slopes = np.asarray(slopes)
    if slopes.size not in (1, x.shape[1]):
        raise ShapeError(f"prelu: {slopes.size} slopes for {x.shape[1]} channels")
    return np.where(x >= 0, x, x * slopes.reshape(1, -1, 1, 1))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so that exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def add(*xs: np.ndarray) -> np.ndarray:
    out = xs[0]
    for x in xs[1:]:
        if x.shape != out.shape:
            raise ShapeError(f"add: shapes {out.shape} and {x.shape} differ")
        out = out + x
    return out


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product; ``b`` may broadcast over spatial dims (b, c, 1, 1)."""
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    return a * b


def concat(xs: Sequence[np.ndarray]) -> np.ndarray:
    ref = xs[0].shape
    for x in xs[1:]:
        if x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
            raise ShapeError(f"concat: shapes {ref} and {x.shape} differ outside the channel dim")
    return np.concatenate(xs, axis=1)


def split(x: np.ndarray, sizes: Sequence[int]) -> Tuple[np.ndarray, ...]:
    if sum(sizes) != x.shape[1]:
        raise ShapeError(f"split: sizes {list(sizes)} do not sum to {x.shape[1]} channels")
    return tuple(np.split(x, np.cumsum(sizes)[:-1], axis=1))


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """(b, c*r*r, h, w) -> (b, c, h*r, w*r); out[.., c, y*r+dy, x*r+dx] = in[.., c*r*r+dy*r+dx, y, x]."""
    b, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(f"pixel_shuffle: {c} channels not divisible by r^2={r * r}")
    co = c // (r * r)
    return x.reshape(b, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, co, h * r, w * r)


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    b, c, h, w = x.shape
    if h % r or w % r:
        raise ShapeError(f"pixel_unshuffle: spatial dims {h}x{w} not divisible by {r}")
    return x.reshape(b, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4).reshape(b, c * r * r, h // r, w // r)


def _pool_windows(x: np.ndarray, kernel: int, stride: int, padding: int, fill: float) -> np.ndarray:
    b, c, h, w = x.shape
    ho = conv_output_size(h, kernel, padding, padding, stride, 1)
    wo = conv_output_size(w, kernel, padding, padding, stride, 1)
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool: input {h}x{w} too small for kernel {kernel}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=fill)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :ho, :wo]


def max_pool(x: np.ndarray, kernel: int, stride: Optional[int] = None, padding: int = 0) -> np.ndarray:
    return _pool_windows(x, kernel, stride or kernel, padding, -np.inf).max(axis=(4, 5))


def avg_pool(x: np.ndarray, kernel: int, stride: Optional[int] = None, padding: int = 0) -> np.ndarray:
    # zero padding counted in the divisor (count_include_pad)
    return _pool_windows(x, kernel, stride or kernel, padding, 0.0).mean(axis=(4, 5))


def global_pool(x: np.ndarray, mode: str = "mean") -> np.ndarray:
    """Per-channel spatial statistic, shape (b, c, 1, 1).

    ``mode`` is ``mean``, ``std`` (population) or ``contrast`` (mean + std,
    the statistic used by contrast-aware channel attention).
    """
    mean = x.mean(axis=(2, 3), keepdims=True)
    if mode == "mean":
        return mean
    std = np.sqrt(((x - mean) ** 2).mean(axis=(2, 3), keepdims=True))
    if mode == "std":
        return std
    if mode == "contrast":
        return mean + std
    raise ValueError(f"unknown global pool mode {mode!r}")

