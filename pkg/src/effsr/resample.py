"""Image resampling: nearest / bilinear / bicubic upscaling and antialiased
bicubic downscaling.

All modes are separable and applied as a pair of dense interpolation
matrices (one per spatial axis). Sampling grids use the half-pixel
convention (``align_corners=False``); out-of-range taps are clamped to the
border for upscaling and mirrored for downscaling (MATLAB ``imresize``).
The cubic kernel is Keys' with a = -0.5 throughout.
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from .ops import ShapeError

CUBIC_A = -0.5


def cubic(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    """Keys cubic convolution kernel."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def nearest_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    src = np.minimum(np.floor(np.arange(n_out) * (n_in / n_out)).astype(int), n_in - 1)
    m[np.arange(n_out), src] = 1.0
    return m


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.minimum(np.floor(src).astype(int), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    lam = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - lam)
    np.add.at(m, (rows, i1), lam)
    return m


def bicubic_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.floor(src).astype(int)
    t = src - i0
    rows = np.arange(n_out)
    for k in range(-1, 3):
        idx = np.clip(i0 + k, 0, n_in - 1)
        np.add.at(m, (rows, idx), cubic(t - k))
    return m


def antialias_bicubic_matrix(n_in: int, factor: int) -> np.ndarray:
    """Downscaling by an integer factor with the cubic kernel widened by ``factor``.

    Weights per output row are normalised to sum to one; taps falling
    outside the image are reflected symmetrically (edge sample repeated).
    """
    n_out = n_in // factor
    scale = 1.0 / factor
    width = 4.0 * factor
    u = (np.arange(n_out) + 0.5) * factor - 0.5
    left = np.floor(u - width / 2).astype(int)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = scale * cubic(scale * (u[:, None] - idx))
    w /= w.sum(axis=1, keepdims=True)
    mirror = np.concatenate([np.arange(n_in), np.arange(n_in - 1, -1, -1)])
    idx = mirror[np.mod(idx, 2 * n_in)]
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.repeat(np.arange(n_out), taps), idx.ravel()), w.ravel())
    return m


_MATRICES = {"nearest": nearest_matrix, "bilinear": bilinear_matrix, "bicubic": bicubic_matrix}


def apply_separable(x: np.ndarray, mh: np.ndarray, mw: np.ndarray) -> np.ndarray:
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64
    mh = mh.astype(dtype, copy=False)
    mw = mw.astype(dtype, copy=False)
    y = np.matmul(mh, x.astype(dtype, copy=False))  # (b, c, ho, w)
    return np.matmul(y, mw.T)


def resize(x: np.ndarray, size: Tuple[int, int], mode: str = "bilinear") -> np.ndarray:
    """Resample the spatial dims of an NCHW tensor to ``size`` = (h, w)."""
    if mode not in _MATRICES:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    h, w = x.shape[2:]
    ho, wo = size
    if min(h, w, ho, wo) < 1:
        raise ShapeError(f"resize: degenerate spatial size {h}x{w} -> {ho}x{wo}")
    if mode == "nearest" and ho % h == 0 and wo % w == 0:
        return x.repeat(ho // h, axis=2).repeat(wo // w, axis=3)
    make = _MATRICES[mode]
    return apply_separable(x, make(h, ho), make(w, wo))


def interpolate(x: np.ndarray, scale: int, mode: str = "nearest") -> np.ndarray:
    """Upscale by an integer factor."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    h, w = x.shape[2:]
    if scale == 1:
        if min(h, w) < 1:
            raise ShapeError(f"interpolate: degenerate spatial size {h}x{w}")
        return x.copy()
    return resize(x, (h * scale, w * scale), mode)


def bicubic_downsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Antialiased bicubic downscaling of an NCHW tensor by an integer factor."""
    h, w = x.shape[2:]
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if h % factor or w % factor:
        raise ShapeError(f"bicubic_downsample: {h}x{w} not divisible by {factor}")
    return apply_separable(x, antialias_bicubic_matrix(h, factor), antialias_bicubic_matrix(w, factor))
