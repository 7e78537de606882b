"""Planar raster images, colour conversion, nearest-neighbour resampling, PNG I/O.

Images are immutable values: ``data`` is a read-only float64 array of shape
``(channels, height, width)`` with every sample in [0, 1].
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage


class ColorSpace(str, enum.Enum):
    GRAY = "Gray"
    RGB = "RGB"
    YUV = "YUV"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            for member in cls:
                if member.value.lower() == value.lower():
                    return member
        return None


class ImageError(ValueError):
    """Invalid image contents or an operation applied to the wrong colour space."""


class UnsupportedFormatError(ImageError):
    pass


@dataclass(frozen=True, eq=False)
class Image:
    data: np.ndarray
    color_space: ColorSpace

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] not in (1, 3):
            raise ImageError(f"expected (channels, height, width) with 1 or 3 channels, got {data.shape}")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise ImageError("image has a zero dimension")
        cs = ColorSpace(self.color_space)
        if (cs is ColorSpace.GRAY) != (data.shape[0] == 1):
            raise ImageError(f"{cs.value} image cannot have {data.shape[0]} channel(s)")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ImageError("samples must lie in [0, 1]")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "color_space", cs)

    @classmethod
    def from_array(cls, arr, color_space=None, clamp=True):
        """Build from ``(H, W)``, ``(H, W, 3)`` or ``(C, H, W)`` float data."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[-1] == 3 and arr.shape[0] != 3:
            arr = np.moveaxis(arr, -1, 0)
        if clamp:
            arr = np.clip(arr, 0.0, 1.0)
        if color_space is None:
            color_space = ColorSpace.GRAY if arr.ndim == 2 or arr.shape[0] == 1 else ColorSpace.RGB
        return cls(arr, color_space)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data, clamp=True) -> Image:
        """Same colour space, new samples (clamped to [0, 1] by default)."""
        data = np.asarray(data, dtype=np.float64)
        if clamp:
            data = np.clip(data, 0.0, 1.0)
        return Image(data, self.color_space)

    def flatten(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.color_space == other.color_space and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.color_space, self.data.shape, self.data.tobytes()))

    def __repr__(self):
        return f"Image({self.color_space.value}, {self.width}x{self.height}x{self.channels})"


# BT.601 full range, as used by JFIF. Chroma carries a +0.5 offset.
_RGB2YUV = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YUV2RGB = np.linalg.inv(_RGB2YUV)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


def rgb_to_yuv(img: Image) -> Image:
    if img.color_space is not ColorSpace.RGB:
        raise ImageError(f"rgb_to_yuv needs an RGB image, got {img.color_space.value}")
    yuv = np.einsum("ij,jhw->ihw", _RGB2YUV, img.data) + _CHROMA_OFFSET[:, None, None]
    return Image(np.clip(yuv, 0.0, 1.0), ColorSpace.YUV)


def yuv_to_rgb(img: Image) -> Image:
    if img.color_space is not ColorSpace.YUV:
        raise ImageError(f"yuv_to_rgb needs a YUV image, got {img.color_space.value}")
    rgb = np.einsum("ij,jhw->ihw", _YUV2RGB, img.data - _CHROMA_OFFSET[:, None, None])
    return Image(np.clip(rgb, 0.0, 1.0), ColorSpace.RGB)


def to_gray(img: Image) -> Image:
    if img.color_space is ColorSpace.GRAY:
        return img
    if img.color_space is ColorSpace.YUV:
        return Image(img.data[:1], ColorSpace.GRAY)
    return Image(np.clip(np.einsum("j,jhw->hw", _RGB2YUV[0], img.data), 0, 1)[None], ColorSpace.GRAY)


def to_rgb(img: Image) -> Image:
    if img.color_space is ColorSpace.RGB:
        return img
    if img.color_space is ColorSpace.YUV:
        return yuv_to_rgb(img)
    return Image(np.repeat(img.data, 3, axis=0), ColorSpace.RGB)


def nearest_indices(src: int, dst: int) -> np.ndarray:
    """Source index for each destination index: floor(i * src / dst)."""
    return (np.arange(dst) * src) // dst


def resize_nearest(img: Image, w: int, h: int) -> Image:
    if w < 1 or h < 1:
        raise ImageError(f"target size must be positive, got {w}x{h}")
    rows = nearest_indices(img.height, h)
    cols = nearest_indices(img.width, w)
    return Image(img.data[:, rows][:, :, cols], img.color_space)


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_uint8(img: Image) -> np.ndarray:
    """``(H, W)`` or ``(H, W, 3)`` uint8 array using round-half-away-from-zero."""
    q = _round_half_away(img.data * 255.0).astype(np.uint8)
    return q[0] if img.channels == 1 else np.moveaxis(q, 0, -1)


def from_uint8(arr) -> Image:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise UnsupportedFormatError(f"expected 8-bit samples, got {arr.dtype}")
    return Image.from_array(arr.astype(np.float64) / 255.0)


def quantize8(img: Image) -> Image:
    """Snap samples to the 1/255 grid, as a PNG round trip would."""
    return img.with_data(_round_half_away(img.data * 255.0) / 255.0)


def load_png(path) -> Image:
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            if pil.format != "PNG":
                raise UnsupportedFormatError(f"{path}: not a PNG file ({pil.format})")
            mode = pil.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise UnsupportedFormatError(f"{path}: unsupported PNG mode {mode} (only 8-bit gray/RGB)")
            if mode == "RGBA":
                pil = pil.convert("RGB")
            elif mode in ("P", "LA", "1"):
                pil = pil.convert("RGB" if mode == "P" else "L")
            elif mode not in ("L", "RGB"):
                raise UnsupportedFormatError(f"{path}: unsupported PNG mode {mode}")
            pil.load()
            arr = np.asarray(pil)
    except UnsupportedFormatError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise OSError(f"{path}: cannot read PNG ({exc})") from exc
    return from_uint8(arr)


def save_png(img: Image, path, text_chunks=None):
    """Write an 8-bit PNG. YUV images are converted to RGB first.

    ``text_chunks`` maps keyword -> str and is stored as compressed text chunks.
    """
    if img.color_space is ColorSpace.YUV:
        img = yuv_to_rgb(img)
    pil = PILImage.fromarray(to_uint8(img), mode="L" if img.channels == 1 else "RGB")
    info = None
    if text_chunks:
        from PIL.PngImagePlugin import PngInfo

        info = PngInfo()
        for key, value in text_chunks.items():
            info.add_text(key, value, zip=True)
    pil.save(Path(path), format="PNG", pnginfo=info)


def read_png_text(path) -> dict:
    """Text chunks stored in a PNG (empty dict when none)."""
    with PILImage.open(path) as pil:
        pil.load()
        return dict(getattr(pil, "text", {}) or {})
