"""Traditional obscuration: Gaussian blur, median blur and pixelation."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .image import Image, ImageError, resize_nearest

STANDARD_SIZES = (5, 15, 25, 35)


class FilterMethod(str, enum.Enum):
    GAUSSIAN = "gaussian"
    MEDIAN = "median"
    PIXELATION = "pixelation"


@dataclass(frozen=True)
class KernelSpec:
    method: FilterMethod
    size: int

    def __post_init__(self):
        method = FilterMethod(self.method)
        object.__setattr__(self, "method", method)
        if method is FilterMethod.PIXELATION:
            if self.size < 1:
                raise ValueError(f"pixel size must be >= 1, got {self.size}")
        else:
            _check_odd(self.size)

    def apply(self, img: Image) -> Image:
        if self.method is FilterMethod.GAUSSIAN:
            return gaussian_blur(img, self.size)
        if self.method is FilterMethod.MEDIAN:
            return median_blur(img, self.size)
        return pixelate(img, self.size)


def _check_odd(w):
    if int(w) != w or w < 1 or w % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {w}")


def gaussian_sigma(w: int) -> float:
    """OpenCV's default sigma for a kernel of width ``w``."""
    _check_odd(w)
    return 0.3 * ((w - 1) / 2 - 1) + 0.8


def gaussian_kernel(w: int) -> np.ndarray:
    sigma = gaussian_sigma(w)
    x = np.arange(w) - (w - 1) / 2
    k = np.exp(-(x**2) / (2 * sigma**2))
    k /= k.sum()
    return k


def _correlate_axis(data, weights, axis):
    r = len(weights) // 2
    pad = [(0, 0)] * data.ndim
    pad[axis] = (r, r)
    padded = np.pad(data, pad, mode="edge")
    n = data.shape[axis]
    out = np.zeros_like(data)
    for i, wt in enumerate(weights):
        out += wt * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(img: Image, w: int) -> Image:
    """Separable Gaussian blur (rows, then columns) with edge-replicated borders."""
    k = gaussian_kernel(w)
    if w == 1:
        return img
    out = _correlate_axis(img.data, k, axis=2)
    out = _correlate_axis(out, k, axis=1)
    return img.with_data(out)


def median_blur(img: Image, w: int) -> Image:
    _check_odd(w)
    if w == 1:
        return img
    return img.with_data(np.stack([kernels.median_filter(ch, w) for ch in img.data]))


def pixelate(img: Image, p: int) -> Image:
    """Nearest-neighbour downsample by ``p`` (floor sizing), then upsample back."""
    if int(p) != p or p < 1:
        raise ValueError(f"pixel size must be a positive integer, got {p}")
    if p > min(img.width, img.height):
        raise ImageError(f"pixel size {p} exceeds image side {min(img.width, img.height)}")
    if p == 1:
        return img
    small = resize_nearest(img, img.width // p, img.height // p)
    return resize_nearest(small, img.width, img.height)
