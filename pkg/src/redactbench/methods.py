"""Registry of obscuration methods behind one batch interface.

Every method maps a list of images to a list of obscured images. Most act
per image; k-same needs the whole batch because outputs are group means.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dct, filters
from .image import Image
from .ksame import DEFAULT_K, GenerativeKSame, k_same_images

TRADITIONAL = ("gaussian", "median", "pixelation")


@dataclass(frozen=True)
class MethodInfo:
    name: str
    needs_setting: bool
    default_setting: Optional[int]
    batch: bool = False
    description: str = ""


METHODS = {
    "clear": MethodInfo("clear", False, None, description="no obscuration"),
    "gaussian": MethodInfo("gaussian", True, None, description="Gaussian blur, setting = odd kernel width"),
    "median": MethodInfo("median", True, None, description="median blur, setting = odd kernel width"),
    "pixelation": MethodInfo("pixelation", True, None, description="nearest-neighbour pixelation, setting = pixel size"),
    "ksame": MethodInfo("ksame", True, DEFAULT_K, batch=True, description="pixel-space k-same, setting = k"),
    "ksame-net": MethodInfo("ksame-net", True, DEFAULT_K, batch=True, description="generative k-same (needs a generator hook)"),
    "upgan": MethodInfo("upgan", True, DEFAULT_K, batch=True, description="UP-GAN style k-same (needs a generator hook)"),
    "p3": MethodInfo("p3", True, dct.DEFAULT_THRESHOLD, description="P3 public part, setting = threshold"),
    "scramble": MethodInfo("scramble", False, None, description="DCT sign scrambling, seeded per image"),
}

# name -> callable(attribute vectors) -> images; filled by users who own a generator
GENERATORS: dict = {}


class UnknownMethodError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ObscurationSpec:
    method: str
    setting: Optional[int] = None

    def __post_init__(self):
        info = METHODS.get(self.method)
        if info is None:
            raise UnknownMethodError(f"unknown obscuration method {self.method!r}; known: {', '.join(METHODS)}")
        setting = self.setting
        if setting is None and info.needs_setting:
            setting = info.default_setting
            if setting is None:
                raise ValueError(f"method {self.method!r} needs a setting")
        if not info.needs_setting and setting is not None:
            raise ValueError(f"method {self.method!r} takes no setting")
        if setting is not None:
            if int(setting) != setting or setting < 1:
                raise ValueError(f"setting must be a positive integer, got {setting!r}")
            setting = int(setting)
            if self.method in ("gaussian", "median") and setting % 2 == 0:
                raise ValueError(f"{self.method} kernel width must be odd, got {setting}")
        object.__setattr__(self, "setting", setting)

    @property
    def label(self) -> str:
        return self.method if self.setting is None else f"{self.method}-{self.setting}"

    @property
    def setting_label(self) -> str:
        return "-" if self.setting is None else str(self.setting)

    @property
    def traditional(self) -> bool:
        return self.method in TRADITIONAL

    @classmethod
    def parse(cls, text: str) -> ObscurationSpec:
        """``"gaussian-25"`` / ``"scramble"`` / ``"ksame-net"`` style labels."""
        if text in METHODS:
            return cls(text)
        head, sep, tail = text.rpartition("-")
        if sep and tail.isdigit() and head in METHODS:
            return cls(head, int(tail))
        raise UnknownMethodError(f"cannot parse obscuration label {text!r}")


def image_seed(seed: int, index: int) -> int:
    """64-bit per-image seed derived from a batch seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def obscure_one(spec: ObscurationSpec, img: Image, seed: int = 0) -> Image:
    m = spec.method
    if m == "clear":
        return img
    if m == "gaussian":
        return filters.gaussian_blur(img, spec.setting)
    if m == "median":
        return filters.median_blur(img, spec.setting)
    if m == "pixelation":
        return filters.pixelate(img, spec.setting)
    if m == "p3":
        return dct.p3_obscure_image(img, spec.setting)
    if m == "scramble":
        return dct.scramble_obscure_image(img, seed)
    raise ValueError(f"{spec.label} obscures whole batches, not single images")


def obscure_batch(spec: ObscurationSpec, images, seed: int = 0) -> list[Image]:
    """Obscure a list of images; scrambling draws one seed per image from ``seed``."""
    images = list(images)
    if spec.method == "ksame":
        return k_same_images(images, spec.setting)
    if spec.method in ("ksame-net", "upgan"):
        gen: Optional[Callable] = GENERATORS.get(spec.method)
        # landmarks/attributes are the generator owner's business; pass pixels through
        return GenerativeKSame(spec.method, spec.setting, gen).obscure([img.flatten() for img in images])
    return [obscure_one(spec, img, image_seed(seed, i)) for i, img in enumerate(images)]
